"""
Reader of finalized `.bwmr` containers.

open_image validates header and footer and loads the chunk index and metadata;
payloads are read on demand with independent positioned reads, so one ImageHandle
may serve read_chunk from several threads. Nothing is cached.
"""

import logging
import os
from typing import Dict, List, NamedTuple, Tuple

import numpy

from .compression import CompressionSpec, decompress_chunk
from .container import (COLOR_RECORD, FOOTER, FOOTER_MAGIC, FORMAT_VERSION, HEADER_EXTENT,
                        HEADER_FIXED, HEADER_LEVEL, HEADER_MAGIC, LENGTH, RECORD, ChunkRecord,
                        header_size)
from .errors import (BadMagicError, ContainerFormatError, LayoutError, RegionError,
                     TruncatedFileError, VersionMismatchError)
from .geometry import overlapping_blocks, voxel_size
from .pyramid import PyramidLevel, PyramidPlan
from .types import ChannelColorInfo, ChunkIndex, DataType, ImageExtent, Size5D, TimePointInfo


logging.getLogger(__name__).setLevel(logging.INFO)
def enable_reader_debug_logging():
    """ enable reader debug logging """
    logging.getLogger(__name__).setLevel(logging.DEBUG)


class ImageHeader(NamedTuple):
    """
    Fixed description stored at the start of a container.
    """
    version: int
    data_type: DataType
    image_size: Size5D
    internal_block: Tuple[int, int, int]
    plan: PyramidPlan
    extent: ImageExtent


class Metadata(NamedTuple):
    """
    Text parameters and per-channel/per-timepoint records of a container.
    """
    parameters: Dict[str, Dict[str, str]]
    time_info: List[TimePointInfo]
    color_info: List[ChannelColorInfo]


def _plan_from_sizes(sizes, internal_block):
    levels = []
    previous = None
    for size in sizes:
        halved = (False, False, False) if previous is None else \
            tuple(current < before for current, before in zip(size, previous))
        levels.append(PyramidLevel(size=tuple(size), halved=halved,
                                   chunk_counts=tuple(-(-s // b)
                                                      for s, b in zip(size, internal_block))))
        previous = size
    return PyramidPlan(levels=tuple(levels), internal_block=tuple(internal_block))


def _parse_header(data, file_size):
    if file_size < len(HEADER_MAGIC) or data[:len(HEADER_MAGIC)] != HEADER_MAGIC:
        raise BadMagicError('not a blockwise multi-resolution container (bad magic)')
    if file_size < HEADER_FIXED.size:
        raise TruncatedFileError(f'file of {file_size} bytes ends inside the header')
    fields = HEADER_FIXED.unpack_from(data)
    version, type_code = fields[1], fields[2]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f'format version {version}, this reader supports '
                                   f'{FORMAT_VERSION}')
    try:
        data_type = DataType(type_code)
    except ValueError:
        raise ContainerFormatError(f'unknown data type code {type_code}')
    try:
        image_size = Size5D.of(fields[3:8])
    except LayoutError as error:
        raise ContainerFormatError(f'image size: {error}') from error
    internal_block = tuple(fields[8:11])
    if min(internal_block) < 1:
        raise ContainerFormatError(f'internal block {internal_block} has an empty axis')
    level_count = fields[11]
    if level_count < 1 or file_size < header_size(level_count) + FOOTER.size:
        raise TruncatedFileError(f'file of {file_size} bytes is too short for '
                                 f'{level_count} levels')
    return data_type, image_size, internal_block, level_count


def _read_exact(file, offset, length):
    file.seek(offset)
    data = file.read(length)
    if len(data) != length:
        raise TruncatedFileError(f'expected {length} bytes at offset {offset}, '
                                 f'got {len(data)}')
    return data


class _MetadataParser():
    def __init__(self, data):
        self.data = data
        self.position = 0

    def integer(self):
        if self.position + LENGTH.size > len(self.data):
            raise ContainerFormatError('metadata block ends early')
        (value,) = LENGTH.unpack_from(self.data, self.position)
        self.position += LENGTH.size
        return value

    def text(self):
        length = self.integer()
        if self.position + length > len(self.data):
            raise ContainerFormatError('metadata text runs past the metadata block')
        raw = self.data[self.position:self.position + length]
        self.position += length
        try:
            return raw.decode('utf-8')
        except UnicodeDecodeError as error:
            raise ContainerFormatError(f'metadata text is not UTF-8: {error}')

    def color(self):
        if self.position + COLOR_RECORD.size > len(self.data):
            raise ContainerFormatError('metadata block ends inside a color record')
        values = COLOR_RECORD.unpack_from(self.data, self.position)
        self.position += COLOR_RECORD.size
        return ChannelColorInfo(color=values[:4], display_range=values[4:])


def _parse_metadata(data, image_size):
    parser = _MetadataParser(data)
    parameters = {}
    for _ in range(parser.integer()):
        section = parser.text()
        entries = parameters.setdefault(section, {})
        for _ in range(parser.integer()):
            name = parser.text()
            entries[name] = parser.text()
    color_info = [parser.color() for _ in range(image_size.c)]
    time_info = [TimePointInfo(parser.text()) for _ in range(image_size.t)]
    if parser.position != len(data):
        raise ContainerFormatError(f'{len(data) - parser.position} unexpected bytes after '
                                   f'the metadata')
    return Metadata(parameters=parameters, time_info=time_info, color_info=color_info)


class ImageHandle():
    """
    An opened container. Immutable after construction.

    :param path: PathLike
    """
    def __init__(self, path):
        logger = logging.getLogger(__name__)
        logger.debug('ImageHandle.__init__: path: %r', path)
        self.path = path
        file_size = os.path.getsize(path)
        with open(path, 'rb') as file:
            head = file.read(HEADER_FIXED.size)
            data_type, image_size, internal_block, level_count = _parse_header(head, file_size)
            size = header_size(level_count)
            rest = _read_exact(file, HEADER_FIXED.size, size - HEADER_FIXED.size)
            level_sizes = [HEADER_LEVEL.unpack_from(rest, HEADER_LEVEL.size * level)
                           for level in range(level_count)]
            for level, level_size in enumerate(level_sizes):
                if min(level_size) < 1:
                    raise ContainerFormatError(f'level {level} size {level_size} has an empty '
                                               f'axis')
            if level_sizes[0] != image_size.xyz:
                raise ContainerFormatError(f'level 0 size {level_sizes[0]} differs from the '
                                           f'image size {tuple(image_size)}')
            try:
                extent = ImageExtent.of(HEADER_EXTENT.unpack_from(rest, HEADER_LEVEL.size
                                                                  * level_count))
            except LayoutError as error:
                raise ContainerFormatError(f'extent: {error}') from error
            index_offset, metadata_offset, magic = FOOTER.unpack(
                _read_exact(file, file_size - FOOTER.size, FOOTER.size))
            if magic != FOOTER_MAGIC:
                raise TruncatedFileError('no footer: the file was truncated or never finalized')
            plan = _plan_from_sizes(level_sizes, internal_block)
            chunk_total = sum(plan.chunk_count(level, image_size.c, image_size.t)
                              for level in range(level_count))
            if not size <= index_offset <= metadata_offset <= file_size - FOOTER.size or \
                    metadata_offset - index_offset != chunk_total * RECORD.size:
                raise ContainerFormatError(f'inconsistent footer offsets {index_offset}, '
                                           f'{metadata_offset} for {chunk_total} chunks')
            index = _read_exact(file, index_offset, metadata_offset - index_offset)
            metadata = _read_exact(file, metadata_offset,
                                   file_size - FOOTER.size - metadata_offset)
        self.header = ImageHeader(version=FORMAT_VERSION, data_type=data_type,
                                  image_size=image_size, internal_block=internal_block,
                                  plan=plan, extent=extent)
        self.records = self.__parse_index(index, size, index_offset)
        self.metadata = _parse_metadata(metadata, image_size)
        logger.debug('ImageHandle.__init__: %r', self)

    def __repr__(self):
        return 'ImageHandle(path=%r, image_size=%r, data_type=%s, levels=%r)' % (
            self.path, tuple(self.image_size), self.data_type.label, len(self.plan))

    def __parse_index(self, index, payload_start, payload_stop):
        records = {}
        position = 0
        spans = []
        for level in range(len(self.plan)):
            for chunk in self.plan.chunk_indices(level, self.image_size.c, self.image_size.t):
                offset, length, raw_length, checksum, codec_code, _ = \
                    RECORD.unpack_from(index, position)
                position += RECORD.size
                if offset < payload_start or offset + length > payload_stop:
                    raise ContainerFormatError(f'chunk {level}:{tuple(chunk)} at {offset}+'
                                               f'{length} outside of the payload region')
                if raw_length != self.header_block_bytes:
                    raise ContainerFormatError(f'chunk {level}:{tuple(chunk)} raw length '
                                               f'{raw_length}')
                records[(level, chunk)] = ChunkRecord(offset, length, raw_length, checksum,
                                                      codec_code)
                spans.append((offset, offset + length))
        spans.sort()
        for (_, end), (start, _) in zip(spans, spans[1:]):
            if start < end:
                raise ContainerFormatError('chunk payloads overlap')
        return records

    @property
    def header_block_bytes(self):
        block_x, block_y, block_z = self.header.internal_block
        return block_x * block_y * block_z * self.header.data_type.bytes_per_element

    @property
    def data_type(self):
        return self.header.data_type

    @property
    def image_size(self):
        return self.header.image_size

    @property
    def plan(self):
        return self.header.plan

    @property
    def extent(self):
        return self.header.extent

    @property
    def parameters(self):
        return self.metadata.parameters

    def voxel_size(self, level=0):
        """
        physical voxel size of a level

        :return: (float, float, float)
        """
        self.__check_level(level)
        size_x, size_y, size_z = self.plan[level].size
        return voxel_size(self.extent, Size5D(size_x, size_y, size_z, 1, 1))

    def stored_bytes(self, level):
        """ compressed payload bytes of one level """
        return sum(record.compressed_length for (record_level, _), record in
                   self.records.items() if record_level == level)

    def __check_level(self, level):
        if not 0 <= level < len(self.plan):
            raise RegionError(f'level {level} outside of the {len(self.plan)} levels')

    def record(self, level, index):
        """ ChunkRecord of a chunk """
        self.__check_level(level)
        try:
            return self.records[(level, ChunkIndex(*index))]
        except (KeyError, TypeError):
            raise RegionError(f'no chunk {tuple(index)} in level {level}')

    def read_chunk(self, level, index):
        """
        read, verify and decode one chunk

        :param level: int
        :param index: ChunkIndex or (t, c, bz, by, bx)
        :return: bytes one internal block, (z, y, x) order, X fastest
        """
        record = self.record(level, index)
        with open(self.path, 'rb') as file:
            payload = _read_exact(file, record.offset, record.compressed_length)
        return decompress_chunk(payload, CompressionSpec.from_codec_code(record.codec_code),
                                record.raw_length, self.data_type.bytes_per_element,
                                checksum=record.checksum)

    def read_chunk_array(self, level, index):
        """ read_chunk as a (z, y, x) numpy array of the internal block """
        block_x, block_y, block_z = self.header.internal_block
        return numpy.frombuffer(self.read_chunk(level, index),
                                dtype=self.data_type.numpy_dtype).reshape(block_z, block_y,
                                                                          block_x)

    def query_region(self, level, xyz_min, xyz_max, c, t):
        """
        chunks needed to load a region

        :param xyz_min: (x, y, z) inclusive voxel coordinates of the level
        :param xyz_max: (x, y, z) exclusive voxel coordinates of the level
        :return: [ChunkIndex] exactly the chunks intersecting the region
        """
        self.__check_level(level)
        size = self.plan[level].size
        if not 0 <= c < self.image_size.c or not 0 <= t < self.image_size.t:
            raise RegionError(f'channel {c} / timepoint {t} outside of the image')
        xyz_min, xyz_max = tuple(xyz_min), tuple(xyz_max)
        if len(xyz_min) != 3 or len(xyz_max) != 3:
            raise RegionError('region bounds need 3 components')
        for low, high, extent in zip(xyz_min, xyz_max, size):
            if not 0 <= low < high <= extent:
                raise RegionError(f'region {xyz_min}..{xyz_max} outside of level {level} '
                                  f'size {size}')
        block_x, block_y, block_z = self.plan.internal_block
        return [ChunkIndex(t, c, bz, by, bx)
                for bz in overlapping_blocks(xyz_min[2], xyz_max[2], block_z)
                for by in overlapping_blocks(xyz_min[1], xyz_max[1], block_y)
                for bx in overlapping_blocks(xyz_min[0], xyz_max[0], block_x)]

    def read_region(self, level, xyz_min, xyz_max, c, t):
        """
        load a region from the chunks query_region selects

        :return: numpy.ndarray (z, y, x)
        """
        min_x, min_y, min_z = xyz_min
        max_x, max_y, max_z = xyz_max
        block_x, block_y, block_z = self.plan.internal_block
        region = numpy.zeros((max_z - min_z, max_y - min_y, max_x - min_x),
                             dtype=self.data_type.numpy_dtype)
        for index in self.query_region(level, xyz_min, xyz_max, c, t):
            block = self.read_chunk_array(level, index)
            origin = (index.bz * block_z, index.by * block_y, index.bx * block_x)
            low = (max(min_z, origin[0]), max(min_y, origin[1]), max(min_x, origin[2]))
            high = (min(max_z, origin[0] + block_z), min(max_y, origin[1] + block_y),
                    min(max_x, origin[2] + block_x))
            region[low[0] - min_z:high[0] - min_z,
                   low[1] - min_y:high[1] - min_y,
                   low[2] - min_x:high[2] - min_x] = \
                block[low[0] - origin[0]:high[0] - origin[0],
                      low[1] - origin[1]:high[1] - origin[1],
                      low[2] - origin[2]:high[2] - origin[2]]
        return region

    def read_level(self, level, c, t):
        """ one whole (z, y, x) volume of a level """
        self.__check_level(level)
        size_x, size_y, size_z = self.plan[level].size
        return self.read_region(level, (0, 0, 0), (size_x, size_y, size_z), c, t)


def open_image(path):
    """
    open a finalized container

    :return: ImageHandle
    """
    return ImageHandle(path)
