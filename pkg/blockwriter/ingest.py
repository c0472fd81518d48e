"""
The streaming front end of the writer.

An ImageWriter accepts input blocks in any order, scatters them into the level 0
chunks of each (channel, timepoint), and dispatches every chunk the moment its last
in-image voxel arrives: the chunk goes to the compression queue and into the
pyramid reducer, which in turn dispatches the coarser chunks it completes. Only
partially filled chunks are held in memory; the MemoryAccount records their
high-water mark.
"""

# pylint: disable=too-many-instance-attributes,too-many-arguments

from dataclasses import dataclass, field, replace
import logging
from typing import List

import numpy

from .compression import CompressionSpec
from .container import create_backend, normalize_parameters
from .errors import (BlockIndexError, DuplicateBlockError, LayoutError, MissingBlocksError,
                     WriterFinishedError)
from .geometry import block_count, block_region, overlapping_blocks, unpack_input_block
from .pyramid import PyramidReducer, plan_levels
from .task_queue import CompressionQueue, default_thread_count
from .types import BlockIndex5D, ChannelColorInfo, ChunkIndex, TimePointInfo


logging.getLogger(__name__).setLevel(logging.INFO)
def enable_ingest_debug_logging():
    """ enable ingest debug logging """
    logging.getLogger(__name__).setLevel(logging.DEBUG)

FLUSH_POLICY = 'dispatch-when-full'


@dataclass(frozen=True)
class WriterOptions:
    """
    :param thread_count: int compression workers, None for the logical processor count
    :param compression: CompressionSpec, gzip level 2 by default
    :param force_block_z1: bool store chunks one plane deep, for images whose single XY
        plane barely fits in memory
    """
    thread_count: int = None
    compression: CompressionSpec = field(default_factory=CompressionSpec)
    force_block_z1: bool = False
    flush_policy: str = FLUSH_POLICY

    def __post_init__(self):
        if self.thread_count is not None and self.thread_count < 1:
            raise LayoutError(f'thread_count must be >= 1, got {self.thread_count!r}')
        if self.flush_policy != FLUSH_POLICY:
            raise LayoutError(f'unsupported flush policy {self.flush_policy!r}')


class MemoryAccount():
    """
    Bytes held in live chunk buffers and their high-water mark.
    """
    def __init__(self):
        self.current_bytes = 0
        self.peak_bytes = 0

    def __repr__(self):
        return f'MemoryAccount(current_bytes={self.current_bytes}, peak_bytes={self.peak_bytes})'

    def allocate(self, byte_count):
        self.current_bytes += byte_count
        self.peak_bytes = max(self.peak_bytes, self.current_bytes)

    def release(self, byte_count):
        self.current_bytes -= byte_count
        assert self.current_bytes >= 0, 'released more bytes than allocated'


class ChunkState():
    """
    A level 0 chunk being filled. The buffer is allocated on the first write.
    """
    __slots__ = ('level', 'index', 'buffer', 'filled_voxels', 'target_voxels')

    def __init__(self, level, index, target_voxels):
        self.level = level
        self.index = index
        self.buffer = None
        self.filled_voxels = 0
        self.target_voxels = target_voxels

    def __repr__(self):
        return (f'ChunkState(level={self.level}, index={tuple(self.index)}, '
                f'filled_voxels={self.filled_voxels}, target_voxels={self.target_voxels})')


@dataclass
class WriteSummary:
    """
    What finish wrote.
    """
    level_bytes: List[int]
    level_raw_bytes: List[int]
    input_bytes: int
    file_bytes: int
    peak_bytes: int
    chunk_count: int

    @property
    def stored_bytes(self):
        return sum(self.level_bytes)

    @property
    def compression_ratio(self):
        """ uncompressed chunk bytes over stored chunk bytes """
        return sum(self.level_raw_bytes) / max(1, self.stored_bytes)


class ImageWriter():
    """
    Streams one image into a blockwise multi-resolution container.

    copy_block must be called from one thread at a time. Compression and file writing
    run concurrently; finish waits for them.

    :param layout: ImageLayout
    :param extent: ImageExtent provisional extent, finish may replace it
    :param options: WriterOptions
    :param output_path: PathLike
    :param backend: str registered backend name or a BackendWriter instance
    :param progress: callable receiving the received fraction of input voxels
    """
    def __init__(self, layout, extent, options=None, output_path=None, backend='reference',
                 progress=None):
        logger = logging.getLogger(__name__)
        options = options or WriterOptions()
        if options.force_block_z1:
            block_x, block_y, _ = layout.internal_block_size
            layout = replace(layout, internal_block_size=(block_x, block_y, 1))
        self.layout = layout
        self.extent = extent
        self.options = options
        self.plan = plan_levels(layout.image_size.xyz, layout.internal_block_size)
        self.__progress = progress
        self.__memory = MemoryAccount()
        self.__reducer = PyramidReducer(self.plan, layout.data_type.numpy_dtype, self.__memory)
        self.__block_counts = block_count(layout.image_size, layout.input_block_size)
        self.__received = numpy.zeros(tuple(reversed(self.__block_counts)), dtype=bool)
        self.__received_count = 0
        self.__received_voxels = 0
        self.__total_voxels = layout.image_size.product()
        self.__chunks = {}
        self.__level_bytes = [0] * len(self.plan)
        self.__level_raw_bytes = [0] * len(self.plan)
        self.__chunk_count = 0
        self.__finished = False
        block_x, block_y, block_z = layout.internal_block_size
        self.__block_shape = (block_z, block_y, block_x)

        self.__backend = create_backend(backend)
        self.__backend.open(output_path, layout, self.plan, extent)
        try:
            self.__queue = CompressionQueue(self.__write_chunk, options.compression,
                                            layout.data_type.bytes_per_element,
                                            options.thread_count or default_thread_count())
        except Exception:
            self.__backend.close()
            raise
        logger.info('ImageWriter: %s %s into %s, %d levels, %s, %d threads',
                    tuple(layout.image_size), layout.data_type.label, output_path,
                    len(self.plan), options.compression.label, self.__queue.max_workers)
        logger.debug('ImageWriter.__init__: %r', self)

    def __repr__(self):
        return 'ImageWriter(layout=%r, options=%r, received=%r, live_chunks=%r, memory=%r)' % (
            self.layout, self.options, self.__received_count, len(self.__chunks), self.__memory)

    def __enter__(self):
        return self

    def __exit__(self, exception_type, exception, traceback):
        if exception_type is not None:
            self.abort()
        else:
            self.close()

    @property
    def block_counts(self):
        """ Size5D input blocks per dimension """
        return self.__block_counts

    @property
    def missing_block_count(self):
        return self.__block_counts.product() - self.__received_count

    @property
    def live_chunk_count(self):
        """ partially filled chunks of every level """
        return len(self.__chunks) + self.__reducer.live_chunks

    @property
    def memory(self):
        return self.__memory

    @property
    def buffered_bytes(self):
        """ bytes of the buffers currently held by partially filled chunks of every level """
        return (sum(state.buffer.nbytes for state in self.__chunks.values()
                    if state.buffer is not None)
                + self.__reducer.live_bytes)

    def peak_memory_bytes(self):
        """
        high-water mark of bytes held in partially filled chunks of all levels
        """
        return self.__memory.peak_bytes

    def __write_chunk(self, chunk):
        """ runs on the queue's consumer thread """
        self.__backend.write_chunk(chunk)
        self.__level_bytes[chunk.level] += len(chunk.payload)
        self.__level_raw_bytes[chunk.level] += chunk.raw_length
        self.__chunk_count += 1

    def __check_open(self):
        if self.__finished:
            raise WriterFinishedError('the writer was already finished or closed')

    def __target_voxels(self, index):
        (start_x, start_y, start_z), (stop_x, stop_y, stop_z) = self.plan.chunk_region(0, index)
        return (stop_x - start_x) * (stop_y - start_y) * (stop_z - start_z)

    def copy_block(self, data, index):
        """
        accept one input block

        :param data: bytes-like or numpy array with product(input_block_size) voxels in the
            layout's input sequence; border blocks padded to full size
        :param index: BlockIndex5D or five integers in X, Y, Z, C, T order
        """
        logger = logging.getLogger(__name__)
        self.__check_open()
        try:
            index = BlockIndex5D.of(index)
        except LayoutError as error:
            raise BlockIndexError(str(error))
        for position, count in zip(index, self.__block_counts):
            if position >= count:
                raise BlockIndexError(f'block index {tuple(index)} outside of the block grid '
                                      f'{tuple(self.__block_counts)}')
        received_key = tuple(reversed(index))
        if self.__received[received_key]:
            raise DuplicateBlockError(f'block {tuple(index)} was already copied')
        layout = self.layout
        array = unpack_input_block(data, layout.input_block_size, layout.input_sequence,
                                   layout.data_type.numpy_dtype)
        self.__received[received_key] = True
        self.__received_count += 1

        start, stop = block_region(index, layout.input_block_size, layout.image_size)
        logger.debug('copy_block: index: %r region: %r %r', tuple(index), start, stop)
        block_x, block_y, block_z = layout.internal_block_size
        start_x, start_y, start_z, start_c, start_t = start
        stop_x, stop_y, stop_z, stop_c, stop_t = stop
        in_image_voxels = 0
        for t in range(start_t, stop_t):
            for c in range(start_c, stop_c):
                volume = array[t - start_t, c - start_c]
                for bz in overlapping_blocks(start_z, stop_z, block_z):
                    for by in overlapping_blocks(start_y, stop_y, block_y):
                        for bx in overlapping_blocks(start_x, stop_x, block_x):
                            in_image_voxels += self.__scatter(
                                ChunkIndex(t, c, bz, by, bx), volume, start, stop)
        self.__received_voxels += in_image_voxels
        if self.__progress is not None:
            self.__progress(self.__received_voxels / self.__total_voxels)

    def __scatter(self, index, volume, start, stop):
        """ copy the overlap of an input block's (z, y, x) volume into one chunk """
        (chunk_x, chunk_y, chunk_z), (chunk_stop_x, chunk_stop_y, chunk_stop_z) = \
            self.plan.chunk_region(0, index)
        low = (max(start[2], chunk_z), max(start[1], chunk_y), max(start[0], chunk_x))
        high = (min(stop[2], chunk_stop_z), min(stop[1], chunk_stop_y),
                min(stop[0], chunk_stop_x))
        state = self.__chunks.get(index)
        if state is None:
            state = ChunkState(0, index, self.__target_voxels(index))
            self.__chunks[index] = state
        if state.buffer is None:
            state.buffer = numpy.zeros(self.__block_shape, dtype=self.layout.data_type.numpy_dtype)
            self.__memory.allocate(self.layout.internal_block_bytes)
        state.buffer[low[0] - chunk_z:high[0] - chunk_z,
                     low[1] - chunk_y:high[1] - chunk_y,
                     low[2] - chunk_x:high[2] - chunk_x] = \
            volume[low[0] - start[2]:high[0] - start[2],
                   low[1] - start[1]:high[1] - start[1],
                   low[2] - start[0]:high[2] - start[0]]
        voxels = (high[0] - low[0]) * (high[1] - low[1]) * (high[2] - low[2])
        state.filled_voxels += voxels
        if state.filled_voxels == state.target_voxels:
            del self.__chunks[index]
            buffer, state.buffer = state.buffer, None
            self.__memory.release(self.layout.internal_block_bytes)
            self.__dispatch(0, index, buffer)
        return voxels

    def __dispatch(self, level, index, block):
        """
        hand a complete chunk to the compression queue and reduce it into the next level
        """
        logger = logging.getLogger(__name__)
        logger.debug('__dispatch: level %r %r', level, tuple(index))
        pending = [(level, index, block)]
        while pending:
            level, index, block = pending.pop()
            self.__queue.submit(level, index, block.tobytes())
            pending.extend(self.__reducer.add_chunk(level, index, block))

    def __default_metadata(self, time_info, color_info):
        size = self.layout.image_size
        if color_info is None:
            color_info = [ChannelColorInfo(display_range=self.layout.data_type.display_range)
                          for _ in range(size.c)]
        if time_info is None:
            time_info = [TimePointInfo() for _ in range(size.t)]
        color_info, time_info = list(color_info), list(time_info)
        if len(color_info) != size.c:
            raise LayoutError(f'{len(color_info)} color records for {size.c} channels')
        if len(time_info) != size.t:
            raise LayoutError(f'{len(time_info)} time records for {size.t} timepoints')
        return time_info, color_info

    def finish(self, extent=None, parameters=None, time_info=None, color_info=None):
        """
        write metadata, wait for every chunk to reach the file and finalize it

        :param extent: ImageExtent final extent, defaults to the one given at creation
        :param parameters: {section: {name: value}} text metadata
        :param time_info: [TimePointInfo] one per timepoint
        :param color_info: [ChannelColorInfo] one per channel
        :return: WriteSummary
        """
        logger = logging.getLogger(__name__)
        self.__check_open()
        if self.missing_block_count:
            raise MissingBlocksError(self.missing_block_count)
        assert not self.__chunks and not self.__reducer.live_chunks, \
            'all blocks copied but chunks are still partially filled'
        time_info, color_info = self.__default_metadata(time_info, color_info)
        parameters = normalize_parameters(parameters)
        extent = extent or self.extent
        self.__finished = True
        try:
            self.__queue.drain()
            self.__backend.write_metadata(parameters, time_info, color_info, extent)
            file_bytes = self.__backend.finalize()
        except BaseException:
            self.__queue.abort()
            self.__backend.close()
            raise
        self.extent = extent
        if self.__progress is not None and self.__received_voxels < self.__total_voxels:
            self.__progress(1.0)
        summary = WriteSummary(level_bytes=list(self.__level_bytes),
                               level_raw_bytes=list(self.__level_raw_bytes),
                               input_bytes=self.layout.image_bytes,
                               file_bytes=file_bytes,
                               peak_bytes=self.__memory.peak_bytes,
                               chunk_count=self.__chunk_count)
        logger.info('ImageWriter.finish: %d chunks, %d bytes, ratio %.3f, peak %d bytes',
                    summary.chunk_count, summary.file_bytes, summary.compression_ratio,
                    summary.peak_bytes)
        return summary

    def abort(self):
        """
        stop the workers and close the file without finalizing it
        """
        logger = logging.getLogger(__name__)
        if self.__finished:
            return
        self.__finished = True
        logger.warning('ImageWriter.abort: closing %r unfinished', self)
        self.__queue.abort()
        self.__backend.close()

    def close(self):
        """
        release resources; an unfinished writer is aborted
        """
        if not self.__finished:
            self.abort()


def create_writer(layout, extent, options=None, output_path=None, backend='reference',
                  progress=None):
    """
    create a writer ready to accept blocks; see ImageWriter
    """
    return ImageWriter(layout, extent, options=options, output_path=output_path,
                       backend=backend, progress=progress)
