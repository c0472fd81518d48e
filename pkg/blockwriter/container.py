"""
Backend writers and the reference container format (`.bwmr`).

A backend receives compressed chunks one at a time, in any order, from a single
consumer thread, then the metadata, then one finalize call. Backends register in
BACKENDS under a name; create_backend is the factory the writer uses.

Reference container layout, all integers little-endian:

    [Header][chunk payloads ...][Index][Metadata][FooterTail]

    Header      magic 'BWMRIMG1', format_version u32, data_type u32,
                image size 5 x u64 (X, Y, Z, C, T), internal block 3 x u64,
                level_count u32, per level 3 x u64 size, extent 6 x f64
    Index       per level, chunks in (t, c, bz, by, bx) order, 32 bytes each:
                offset u64, compressed_length u64, raw_length u32, checksum u32,
                codec_code u32, reserved u32
    Metadata    section_count u32, per section a name, param_count u32 and
                name/value pairs (u32 length + UTF-8 each); per channel 6 x f32
                (RGBA, display min, display max); per timepoint a timestamp
    FooterTail  index_offset u64, metadata_offset u64, magic 'BWMREND1'

Each chunk is one internal block in (z, y, x) order, X fastest, zero padded
outside its level.
"""

# pylint: disable=too-many-instance-attributes

from abc import ABC, abstractmethod
from collections.abc import Mapping
import logging
import struct
from typing import NamedTuple

from .errors import (ContainerError, DuplicateChunkError, LayoutError, MissingChunksError,
                     WriterFinishedError)


logging.getLogger(__name__).setLevel(logging.INFO)
def enable_container_debug_logging():
    """ enable container debug logging """
    logging.getLogger(__name__).setLevel(logging.DEBUG)

HEADER_MAGIC = b'BWMRIMG1'
FOOTER_MAGIC = b'BWMREND1'
FORMAT_VERSION = 1
FILE_EXTENSION = '.bwmr'

HEADER_FIXED = struct.Struct('<8sII5Q3QI')
HEADER_LEVEL = struct.Struct('<3Q')
HEADER_EXTENT = struct.Struct('<6d')
RECORD = struct.Struct('<QQIIII')
FOOTER = struct.Struct('<QQ8s')
COLOR_RECORD = struct.Struct('<6f')
LENGTH = struct.Struct('<I')


def header_size(level_count):
    """ bytes before the first chunk payload """
    return HEADER_FIXED.size + level_count * HEADER_LEVEL.size + HEADER_EXTENT.size


class ChunkRecord(NamedTuple):
    """
    Index entry of one stored chunk.
    """
    offset: int
    compressed_length: int
    raw_length: int
    checksum: int
    codec_code: int


def encode_header(layout, plan, extent):
    """
    :return: bytes the complete header
    """
    parts = [HEADER_FIXED.pack(HEADER_MAGIC, FORMAT_VERSION, int(layout.data_type),
                               *layout.image_size, *layout.internal_block_size, len(plan))]
    parts.extend(HEADER_LEVEL.pack(*level.size) for level in plan)
    parts.append(HEADER_EXTENT.pack(*extent.as_tuple()))
    return b''.join(parts)


def normalize_parameters(parameters):
    """
    validate metadata parameters

    :param parameters: mapping or sequence of (section, parameters) pairs, each section a
        mapping or sequence of (name, value) pairs, all text
    :return: [(str, [(str, str)])] in the given order
    """
    def pairs(scope, items):
        items = list(items.items()) if isinstance(items, Mapping) else list(items)
        seen = set()
        for name, _ in items:
            if not isinstance(name, str) or not name:
                raise LayoutError(f'{scope}: names must be non-empty text, got {name!r}')
            if name in seen:
                raise LayoutError(f'{scope}: duplicate name {name!r}')
            seen.add(name)
        return items

    sections = []
    for section, values in pairs('parameters', parameters or {}):
        entries = pairs(f'section {section!r}', values)
        for name, value in entries:
            if not isinstance(value, str):
                raise LayoutError(f'parameter {section}/{name}: value must be text, '
                                  f'got {value!r}')
        sections.append((section, entries))
    return sections


def _text(value):
    data = value.encode('utf-8')
    return LENGTH.pack(len(data)) + data


def encode_metadata(parameters, time_info, color_info):
    """
    :return: bytes the metadata block
    """
    sections = normalize_parameters(parameters)
    parts = [LENGTH.pack(len(sections))]
    for section, entries in sections:
        parts.append(_text(section))
        parts.append(LENGTH.pack(len(entries)))
        for name, value in entries:
            parts.append(_text(name))
            parts.append(_text(value))
    for info in color_info:
        parts.append(COLOR_RECORD.pack(*info.color, *info.display_range))
    for info in time_info:
        parts.append(_text(info.timestamp))
    return b''.join(parts)


class BackendWriter(ABC):
    """
    Interface of the component persisting chunks, metadata and index of one file.

    write_chunk may be called in any order, but only from one thread. Implementations
    must not rely on payloads arriving in file order.
    """

    @abstractmethod
    def open(self, path, layout, plan, extent):
        """ create the file and write whatever precedes the chunks """

    @abstractmethod
    def write_chunk(self, chunk):
        """ store one CompressedChunk """

    @abstractmethod
    def write_metadata(self, parameters, time_info, color_info, extent=None):
        """ store text parameters, per-timepoint and per-channel records, final extent """

    @abstractmethod
    def finalize(self):
        """
        complete the file; called exactly once
        :return: int file size in bytes
        """

    @abstractmethod
    def close(self):
        """ release the file without finalizing it; idempotent """


class ReferenceBackend(BackendWriter):
    """
    Writes the reference `.bwmr` container. Payloads are appended in arrival order; the
    index addresses them.
    """
    def __init__(self):
        self.__file = None
        self.__path = None
        self.__layout = None
        self.__plan = None
        self.__records = {}
        self.__offset = 0
        self.__header_size = 0
        self.__metadata = None
        self.__finalized = False

    def __repr__(self):
        return 'ReferenceBackend(path=%r, chunks=%r, offset=%r, finalized=%r)' % (
            self.__path, len(self.__records), self.__offset, self.__finalized)

    @property
    def records(self):
        """ {(level, ChunkIndex): ChunkRecord} of the chunks written so far """
        return dict(self.__records)

    def open(self, path, layout, plan, extent):
        logger = logging.getLogger(__name__)
        logger.debug('ReferenceBackend.open: path: %r', path)
        if self.__file is not None:
            raise ContainerError('backend already open')
        header = encode_header(layout, plan, extent)
        self.__file = open(path, 'wb')
        try:
            self.__file.write(header)
        except OSError:
            self.close()
            raise
        self.__path = path
        self.__layout = layout
        self.__plan = plan
        self.__header_size = len(header)
        self.__offset = len(header)

    def __check_writable(self):
        if self.__file is None or self.__finalized:
            raise WriterFinishedError('backend is not open')

    def __check_index(self, level, index):
        if not 0 <= level < len(self.__plan):
            raise ContainerError(f'level {level} outside of the {len(self.__plan)} levels')
        count_x, count_y, count_z = self.__plan[level].chunk_counts
        size = self.__layout.image_size
        for value, bound in zip(index, (size.t, size.c, count_z, count_y, count_x)):
            if not 0 <= value < bound:
                raise ContainerError(f'chunk {tuple(index)} outside of level {level}')

    def write_chunk(self, chunk):
        logger = logging.getLogger(__name__)
        self.__check_writable()
        key = (chunk.level, tuple(chunk.index))
        self.__check_index(chunk.level, chunk.index)
        if key in self.__records:
            raise DuplicateChunkError(f'chunk {chunk.level}:{tuple(chunk.index)} written twice')
        self.__file.write(chunk.payload)
        self.__records[key] = ChunkRecord(offset=self.__offset,
                                          compressed_length=len(chunk.payload),
                                          raw_length=chunk.raw_length,
                                          checksum=chunk.checksum,
                                          codec_code=chunk.codec_code)
        logger.debug('write_chunk: %r -> %r', key, self.__records[key])
        self.__offset += len(chunk.payload)

    def write_metadata(self, parameters, time_info, color_info, extent=None):
        self.__check_writable()
        size = self.__layout.image_size
        if len(color_info) != size.c or len(time_info) != size.t:
            raise LayoutError(f'metadata for {len(color_info)} channels and {len(time_info)} '
                              f'timepoints, image has {size.c} and {size.t}')
        self.__metadata = encode_metadata(parameters, time_info, color_info)
        if extent is not None:
            self.__file.seek(self.__header_size - HEADER_EXTENT.size)
            self.__file.write(HEADER_EXTENT.pack(*extent.as_tuple()))
            self.__file.seek(self.__offset)

    def missing_chunks(self):
        """
        :return: [(level, ChunkIndex)] chunks not written yet
        """
        size = self.__layout.image_size
        return [(level, index)
                for level in range(len(self.__plan))
                for index in self.__plan.chunk_indices(level, size.c, size.t)
                if (level, tuple(index)) not in self.__records]

    def finalize(self):
        logger = logging.getLogger(__name__)
        self.__check_writable()
        missing = self.missing_chunks()
        if missing:
            raise MissingChunksError(missing)
        if self.__metadata is None:
            raise ContainerError('finalize before write_metadata')
        size = self.__layout.image_size
        index_offset = self.__offset
        index = b''.join(
            RECORD.pack(*self.__records[(level, tuple(chunk))], 0)
            for level in range(len(self.__plan))
            for chunk in self.__plan.chunk_indices(level, size.c, size.t))
        metadata_offset = index_offset + len(index)
        self.__file.write(index)
        self.__file.write(self.__metadata)
        self.__file.write(FOOTER.pack(index_offset, metadata_offset, FOOTER_MAGIC))
        file_bytes = metadata_offset + len(self.__metadata) + FOOTER.size
        self.__finalized = True
        self.__file.close()
        self.__file = None
        logger.info('ReferenceBackend.finalize: %s, %d chunks, %d bytes', self.__path,
                    len(self.__records), file_bytes)
        return file_bytes

    def close(self):
        if self.__file is not None:
            self.__file.close()
            self.__file = None


BACKENDS = {
    'reference': ReferenceBackend,
}


def create_backend(backend='reference'):
    """
    file writer factory

    :param backend: str name in BACKENDS or a BackendWriter instance
    :return: BackendWriter
    """
    if isinstance(backend, BackendWriter):
        return backend
    try:
        return BACKENDS[backend]()
    except KeyError:
        raise LayoutError(f'unknown backend {backend!r}, expected one of {sorted(BACKENDS)}')

