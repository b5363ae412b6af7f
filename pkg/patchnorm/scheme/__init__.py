from .scheme_config import SchemeConfig, ALLOWED_PATCH_COUNTS
from .grid import Rect, PatchGrid, generate_grid, cut_interval
from .channels import ChannelGroup, ChannelGrouping, draw_subset, assign_channels
from .pixels import PixelGrouping, generate_pixel_groups
from .base_partitioner import BasePartitioner
from .partitioners import PatchPartitioner, PixelPartitioner
