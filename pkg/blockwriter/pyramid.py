"""
Resolution levels and their construction.

Level k+1 halves (rounding up) every axis of level k that is larger than the
internal block along that axis; planning stops when no axis qualifies. A voxel of
level k+1 is the mean of its source window in level k: two voxels along every
halved axis, one along the others, clipped at the level's far edge. Integer types
round half away from zero.

The PyramidReducer builds level k+1 chunk by chunk while level k chunks complete,
so only partially reduced chunks are held in memory.
"""

import logging
from typing import NamedTuple, Tuple

import numpy

from .geometry import ceil_div, overlapping_blocks
from .types import ChunkIndex


logging.getLogger(__name__).setLevel(logging.INFO)
def enable_pyramid_debug_logging():
    """ enable pyramid debug logging """
    logging.getLogger(__name__).setLevel(logging.DEBUG)


class PyramidLevel(NamedTuple):
    """
    One resolution level.

    :param size: (x, y, z) voxels
    :param halved: (x, y, z) bools, which axes of the previous level were halved
    :param chunk_counts: (x, y, z) chunks covering the level
    """
    size: Tuple[int, int, int]
    halved: Tuple[bool, bool, bool]
    chunk_counts: Tuple[int, int, int]

    @property
    def voxel_count(self):
        size_x, size_y, size_z = self.size
        return size_x * size_y * size_z

    @property
    def chunks_per_volume(self):
        count_x, count_y, count_z = self.chunk_counts
        return count_x * count_y * count_z


class PyramidPlan(NamedTuple):
    """
    Ordered resolution levels, level 0 being the image itself.
    """
    levels: Tuple[PyramidLevel, ...]
    internal_block: Tuple[int, int, int]

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, level):
        return self.levels[level]

    def __iter__(self):
        return iter(self.levels)

    @property
    def level_count(self):
        return len(self.levels)

    def chunk_count(self, level, channels=1, timepoints=1):
        """ chunks of one level over all channels and timepoints """
        return self.levels[level].chunks_per_volume * channels * timepoints

    def chunk_indices(self, level, channels, timepoints):
        """
        every chunk index of a level in lexicographic (t, c, bz, by, bx) order
        """
        count_x, count_y, count_z = self.levels[level].chunk_counts
        for t in range(timepoints):
            for c in range(channels):
                for bz in range(count_z):
                    for by in range(count_y):
                        for bx in range(count_x):
                            yield ChunkIndex(t, c, bz, by, bx)

    def chunk_region(self, level, index):
        """
        in-level voxel region covered by a chunk

        :return: (start, stop) two (x, y, z) tuples, half-open
        """
        size = self.levels[level].size
        start = tuple(b * block for b, block in zip((index.bx, index.by, index.bz),
                                                    self.internal_block))
        stop = tuple(min(s + block, extent) for s, block, extent in zip(start,
                                                                        self.internal_block,
                                                                        size))
        return start, stop


def _level(size, halved, internal_block):
    return PyramidLevel(size=tuple(size), halved=tuple(halved),
                        chunk_counts=tuple(ceil_div(s, b) for s, b in zip(size, internal_block)))


def plan_levels(image_xyz, internal_block):
    """
    plan the resolution levels of an image

    :param image_xyz: (x, y, z) voxels of level 0
    :param internal_block: (x, y, z) internal chunk size
    :return: PyramidPlan
    """
    logger = logging.getLogger(__name__)
    internal_block = tuple(int(b) for b in internal_block)
    size = tuple(int(s) for s in image_xyz)
    levels = [_level(size, (False, False, False), internal_block)]
    while True:
        halved = tuple(s > b for s, b in zip(size, internal_block))
        if not any(halved):
            break
        size = tuple(ceil_div(s, 2) if h else s for s, h in zip(size, halved))
        levels.append(_level(size, halved, internal_block))
    logger.debug('plan_levels: %r -> %r', image_xyz, [level.size for level in levels])
    return PyramidPlan(levels=tuple(levels), internal_block=internal_block)


def level_voxel_count(plan, level):
    """
    voxels in one XYZ volume of a level
    """
    return plan.levels[level].voxel_count


def _window_population(source_extent, target_start, target_stop, halved):
    """
    number of source voxels averaged into each target voxel along one axis
    """
    targets = numpy.arange(target_start, target_stop, dtype=numpy.int64)
    if not halved:
        return numpy.ones(targets.size, dtype=numpy.int64)
    return numpy.minimum(2 * targets + 2, source_extent) - 2 * targets


def finalize_mean(sums, populations, numpy_dtype):
    """
    divide window sums by window populations and convert to the voxel type

    integers round half away from zero; every mean here is non-negative for unsigned
    types, where that is floor(mean + 1/2)
    """
    if numpy_dtype.kind == 'f':
        return (sums / populations).astype(numpy_dtype)
    return ((2 * sums + populations) // (2 * populations)).astype(numpy_dtype)


def accumulator_dtype(numpy_dtype):
    """ widened type for window sums """
    return numpy.float64 if numpy_dtype.kind == 'f' else numpy.int64


def _pair_sum(array, axis, origin):
    """
    sum neighbouring pairs along an axis, pairs starting at even absolute positions

    :param origin: int absolute position of array index 0 along axis
    """
    pad_front = origin % 2
    pad_back = (pad_front + array.shape[axis]) % 2
    if pad_front or pad_back:
        widths = [(0, 0)] * array.ndim
        widths[axis] = (pad_front, pad_back)
        array = numpy.pad(array, widths)
    shape = list(array.shape)
    shape[axis:axis + 1] = [shape[axis] // 2, 2]
    return array.reshape(shape).sum(axis=axis + 1)


def _crossing_mask(axes, region):
    """ (z, y, x) mask of the voxels in region whose window crosses a source chunk border """
    crossing_z, crossing_y, crossing_x = (axis[part] for axis, part in zip(axes, region))
    return crossing_z[:, None, None] | crossing_y[None, :, None] | crossing_x[None, None, :]


class _Accumulator():
    """
    A level k+1 chunk under construction.

    A voxel whose source window lies inside one level k chunk gets its final mean when
    that chunk arrives and is held in the voxel type. A voxel whose window crosses a
    level k chunk border keeps a wide window sum until the chunk completes. When most
    voxels cross a border, every voxel keeps a wide sum.
    """
    def __init__(self, block_shape, dtype, accumulator_type, crossing_axes, expected):
        self.crossing_axes = crossing_axes
        self.received = 0
        self.expected = expected
        crossing = _crossing_mask(crossing_axes, (slice(None),) * 3)
        count = int(crossing.sum())
        if 2 * count > crossing.size:
            self.block = None
            self.positions = None
            self.sums = numpy.zeros(block_shape, dtype=accumulator_type)
        else:
            self.block = numpy.zeros(block_shape, dtype=dtype)
            self.positions = numpy.flatnonzero(crossing)
            self.sums = numpy.zeros(count, dtype=accumulator_type)

    @property
    def nbytes(self):
        """ bytes held by the buffers of this chunk """
        return sum(array.nbytes for array in (self.block, self.positions, self.sums)
                   if array is not None)

    def add(self, region, sums, population):
        """
        :param region: (z, y, x) slices of the block receiving sums
        :param sums: window sums from one level k chunk
        :param population: complete window populations of region
        """
        if self.block is None:
            self.sums[region] += sums
            return
        self.block[region] = finalize_mean(sums, population, self.block.dtype)
        if not self.sums.size:
            return
        crossing = _crossing_mask(self.crossing_axes, region)
        if crossing.any():
            coordinates = [axis + part.start for axis, part in zip(numpy.nonzero(crossing), region)]
            flat = numpy.ravel_multi_index(coordinates, self.block.shape)
            self.sums[numpy.searchsorted(self.positions, flat)] += sums[crossing]

    def finish(self, region, population, dtype):
        """
        :return: numpy.ndarray the completed (z, y, x) block, zero outside region
        """
        if self.block is None:
            block = numpy.zeros(self.sums.shape, dtype=dtype)
            block[region] = finalize_mean(self.sums[region], population, dtype)
            return block
        if self.sums.size:
            populations = numpy.ones(self.block.shape, dtype=numpy.int64)
            populations[region] = population
            self.block.flat[self.positions] = finalize_mean(self.sums,
                                                            populations.flat[self.positions],
                                                            dtype)
        return self.block


class PyramidReducer():
    """
    Streaming reduction of completed level k chunks into level k+1 chunks.

    Not threadsafe: one producer calls add_chunk. Results are independent of the order
    in which source chunks arrive.

    :param plan: PyramidPlan
    :param numpy_dtype: numpy dtype of the voxels
    :param memory_account: MemoryAccount charged with the buffers of every live target
    """
    def __init__(self, plan, numpy_dtype, memory_account=None):
        self.__plan = plan
        self.__dtype = numpy.dtype(numpy_dtype)
        self.__accumulator_type = accumulator_dtype(self.__dtype)
        self.__memory_account = memory_account
        block_x, block_y, block_z = plan.internal_block
        self.__block_shape = (block_z, block_y, block_x)
        self.__accumulators = {}

    def __repr__(self):
        return 'PyramidReducer(levels=%r, live=%r)' % (len(self.__plan),
                                                      len(self.__accumulators))

    @property
    def live_chunks(self):
        """ number of partially reduced chunks """
        return len(self.__accumulators)

    @property
    def live_bytes(self):
        """ bytes held by the buffers of partially reduced chunks """
        return sum(accumulator.nbytes for accumulator in self.__accumulators.values())

    def __source_window(self, level, index):
        """
        level k voxel region feeding a level k+1 chunk, as (start, stop) (x, y, z) tuples
        """
        start, stop = self.__plan.chunk_region(level + 1, index)
        source_size = self.__plan[level].size
        halved = self.__plan[level + 1].halved
        source_start = tuple(2 * s if h else s for s, h in zip(start, halved))
        source_stop = tuple(min(2 * s, extent) if h else s
                            for s, h, extent in zip(stop, halved, source_size))
        return source_start, source_stop

    def __crossing_axes(self, level, index):
        """
        per axis (z, y, x) of a level k+1 chunk, the positions whose source window
        crosses a level k chunk border; only odd block sizes split a window
        """
        start, _ = self.__plan.chunk_region(level, index)
        source_size = self.__plan[level - 1].size
        axes = []
        for position, block, extent, halved in zip(start, self.__plan.internal_block,
                                                   source_size, self.__plan[level].halved):
            ends = 2 * numpy.arange(position, position + block, dtype=numpy.int64) + 1
            if halved and block % 2:
                axes.append((ends % block == 0) & (ends < extent))
            else:
                axes.append(numpy.zeros(block, dtype=bool))
        crossing_x, crossing_y, crossing_z = axes
        return crossing_z, crossing_y, crossing_x

    def __population(self, level, low, high):
        """
        complete window populations of a (z, y, x) region of level k+1
        """
        size_x, size_y, size_z = self.__plan[level - 1].size
        halved_x, halved_y, halved_z = self.__plan[level].halved
        population_z, population_y, population_x = (
            _window_population(extent, start, stop, halved) for extent, start, stop, halved in
            zip((size_z, size_y, size_x), low, high, (halved_z, halved_y, halved_x)))
        return (population_z[:, None, None] * population_y[None, :, None]
                * population_x[None, None, :])

    def __accumulator(self, level, index):
        key = (level, index)
        accumulator = self.__accumulators.get(key)
        if accumulator is None:
            source_start, source_stop = self.__source_window(level - 1, index)
            expected = 1
            for low, high in zip(source_start, source_stop):
                expected *= high - low
            accumulator = _Accumulator(self.__block_shape, self.__dtype,
                                       self.__accumulator_type,
                                       self.__crossing_axes(level, index), expected)
            self.__accumulators[key] = accumulator
            if self.__memory_account is not None:
                self.__memory_account.allocate(accumulator.nbytes)
        return accumulator

    def __complete(self, level, index, accumulator):
        del self.__accumulators[(level, index)]
        if self.__memory_account is not None:
            self.__memory_account.release(accumulator.nbytes)
        (start_x, start_y, start_z), (stop_x, stop_y, stop_z) = self.__plan.chunk_region(level,
                                                                                        index)
        region = (slice(0, stop_z - start_z), slice(0, stop_y - start_y),
                  slice(0, stop_x - start_x))
        population = self.__population(level, (start_z, start_y, start_x),
                                       (stop_z, stop_y, stop_x))
        return accumulator.finish(region, population, self.__dtype)

    def add_chunk(self, level, index, block):
        """
        reduce one completed chunk into the next level

        :param level: int level of the source chunk
        :param index: ChunkIndex of the source chunk
        :param block: numpy.ndarray (z, y, x) internal block, padding ignored
        :return: [(level + 1, ChunkIndex, numpy.ndarray)] target chunks completed by this call
        """
        logger = logging.getLogger(__name__)
        if level + 1 >= len(self.__plan):
            return []
        target_level = level + 1
        halved_x, halved_y, halved_z = self.__plan[target_level].halved
        (start_x, start_y, start_z), (stop_x, stop_y, stop_z) = self.__plan.chunk_region(level,
                                                                                        index)
        source = block[:stop_z - start_z, :stop_y - start_y, :stop_x - start_x]
        sums = source.astype(self.__accumulator_type)
        origin = [start_z, start_y, start_x]
        for axis, halved in enumerate((halved_z, halved_y, halved_x)):
            if halved:
                sums = _pair_sum(sums, axis, origin[axis])
                origin[axis] //= 2
        target = tuple(origin)
        block_x, block_y, block_z = self.__plan.internal_block
        completed = []
        for bz in overlapping_blocks(target[0], target[0] + sums.shape[0], block_z):
            for by in overlapping_blocks(target[1], target[1] + sums.shape[1], block_y):
                for bx in overlapping_blocks(target[2], target[2] + sums.shape[2], block_x):
                    target_index = ChunkIndex(index.t, index.c, bz, by, bx)
                    accumulator = self.__accumulator(target_level, target_index)
                    chunk_origin = (bz * block_z, by * block_y, bx * block_x)
                    low = tuple(max(t, o) for t, o in zip(target, chunk_origin))
                    high = tuple(min(t + extent, o + size) for t, extent, o, size in
                                 zip(target, sums.shape, chunk_origin,
                                     (block_z, block_y, block_x)))
                    accumulator.add(
                        tuple(slice(l - o, h - o) for l, h, o in zip(low, high, chunk_origin)),
                        sums[tuple(slice(l - t, h - t) for l, h, t in zip(low, high, target))],
                        self.__population(target_level, low, high))
                    accumulator.received += self.__source_voxels(
                        level, target_index, (start_x, start_y, start_z),
                        (stop_x, stop_y, stop_z))
                    if accumulator.received == accumulator.expected:
                        logger.debug('add_chunk: level %r %r complete', target_level,
                                     target_index)
                        completed.append((target_level, target_index,
                                          self.__complete(target_level, target_index,
                                                          accumulator)))
        return completed

    def __source_voxels(self, level, target_index, chunk_start, chunk_stop):
        """
        number of voxels of a source chunk lying in the source window of a target chunk
        """
        window_start, window_stop = self.__source_window(level, target_index)
        count = 1
        for low, high, window_low, window_high in zip(chunk_start, chunk_stop, window_start,
                                                      window_stop):
            count *= max(0, min(high, window_high) - max(low, window_low))
        return count


def downsample_volume(volume, halved):
    """
    reduce a whole (z, y, x) volume by one level, without chunking

    :param volume: numpy.ndarray (z, y, x)
    :param halved: (x, y, z) bools
    :return: numpy.ndarray of the same dtype
    """
    dtype = volume.dtype
    sums = volume.astype(accumulator_dtype(dtype))
    populations = numpy.ones(volume.shape, dtype=numpy.int64)
    for axis, halve in zip((2, 1, 0), halved):
        if not halve:
            continue
        length = sums.shape[axis]
        even = numpy.take(sums, numpy.arange(0, length, 2), axis=axis)
        odd = numpy.take(sums, numpy.arange(1, length, 2), axis=axis)
        even_population = numpy.take(populations, numpy.arange(0, length, 2), axis=axis)
        odd_population = numpy.take(populations, numpy.arange(1, length, 2), axis=axis)
        if odd.shape[axis] < even.shape[axis]:
            widths = [(0, 0)] * 3
            widths[axis] = (0, 1)
            odd = numpy.pad(odd, widths)
            odd_population = numpy.pad(odd_population, widths)
        sums = even + odd
        populations = even_population + odd_population
    return finalize_mean(sums, populations, dtype)


def build_pyramid(volume, plan):
    """
    every level of one (z, y, x) volume, level 0 first, reduced without chunking
    """
    levels = [volume]
    for level in plan.levels[1:]:
        levels.append(downsample_volume(levels[-1], level.halved))
    return levels
