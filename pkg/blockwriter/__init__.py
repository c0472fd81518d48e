from .compression import CompressionSpec
from .ingest import ImageWriter, WriteSummary, WriterOptions, create_writer
from .reader import ImageHandle, open_image
from .types import (BlockIndex5D, ChannelColorInfo, DataType, DimensionSequence5D, ImageExtent,
                    ImageLayout, Size5D, TimePointInfo)
