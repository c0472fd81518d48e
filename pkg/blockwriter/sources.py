"""
Volume sources feeding the writer and the streaming orders of input blocks.

Synthetic volumes are pure functions of the voxel coordinate and a seed, so any
region can be produced in any order and regenerated later for verification.
Raw volumes are headerless voxel streams in X-fastest (X, Y, Z, C, T) order,
memory-mapped rather than loaded.
"""

import logging
import os

import numpy

from .errors import LayoutError
from .geometry import block_region, ceil_div, pack_input_block, to_array_slices
from .types import BlockIndex5D, DimensionSequence5D, Size5D


logging.getLogger(__name__).setLevel(logging.INFO)
def enable_sources_debug_logging():
    """ enable sources debug logging """
    logging.getLogger(__name__).setLevel(logging.DEBUG)

SYNTHETIC_NAMES = ('ramp', 'smooth-noise', 'zeros')

# smooth-noise on integer data: uniform noise in [0, NOISE_AMPLITUDE) on a grid of NOISE_STEP
NOISE_AMPLITUDE = 64
NOISE_STEP = 8

_MIX_1 = numpy.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = numpy.uint64(0x94D049BB133111EB)
_GOLDEN = numpy.uint64(0x9E3779B97F4A7C15)


def _mix(values):
    """ splitmix64 finalizer on a uint64 array, wrapping arithmetic """
    values = values ^ (values >> numpy.uint64(30))
    values = values * _MIX_1
    values = values ^ (values >> numpy.uint64(27))
    values = values * _MIX_2
    return values ^ (values >> numpy.uint64(31))


def _coordinates(start, stop):
    """ open (T, C, Z, Y, X) index grids of a half-open X, Y, Z, C, T region """
    ranges = [numpy.arange(start[d], stop[d], dtype=numpy.int64) for d in (4, 3, 2, 1, 0)]
    return numpy.ix_(*ranges)


class SyntheticSource():
    """
    A seeded synthetic volume.

    ramp          smooth low-frequency pattern only
    smooth-noise  ramp plus uniform noise in [0, NOISE_AMPLITUDE), multiples of NOISE_STEP
                  on integer data; on 16-bit data the high bytes vary slowly and the
                  low bytes carry the noise
    zeros         all voxels zero

    :param name: str one of SYNTHETIC_NAMES
    :param image_size: Size5D
    :param data_type: DataType
    :param seed: int
    """
    def __init__(self, name, image_size, data_type, seed=0):
        if name not in SYNTHETIC_NAMES:
            raise LayoutError(f'unknown synthetic volume {name!r}, expected one of '
                              f'{list(SYNTHETIC_NAMES)}')
        self.name = name
        self.image_size = Size5D.of(image_size)
        self.data_type = data_type
        self.seed = int(seed)

    def __repr__(self):
        return 'SyntheticSource(name=%r, image_size=%r, data_type=%s, seed=%r)' % (
            self.name, tuple(self.image_size), self.data_type.label, self.seed)

    @property
    def __span(self):
        """ value range of the ramp, leaving room for the noise """
        if self.data_type.is_integer:
            ceiling = float(numpy.iinfo(self.data_type.numpy_dtype).max)
            return min(4096.0, ceiling - NOISE_AMPLITUDE)
        return 0.9

    def __ramp(self, t, c, z, y, x):
        # nearly flat within a plane, rising along Z, offset per channel and timepoint
        size = self.image_size
        fraction = (0.2 + 0.5 * z / size.z + 0.0625 * (c % 4) + 0.03125 * (t % 4)
                    + 0.0002 * (x / size.x + y / size.y))
        return fraction * self.__span

    def __noise(self, t, c, z, y, x):
        size = self.image_size
        linear = ((((t * size.c + c) * size.z + z) * size.y + y) * size.x + x).astype(numpy.uint64)
        hashed = _mix(linear * _GOLDEN + numpy.uint64(self.seed & 0xFFFFFFFFFFFFFFFF))
        if self.data_type.is_integer:
            levels = numpy.uint64(NOISE_AMPLITUDE // NOISE_STEP)
            return (hashed % levels).astype(numpy.float64) * NOISE_STEP
        return (hashed >> numpy.uint64(11)).astype(numpy.float64) / float(2 ** 53) * 0.1

    def region(self, start, stop):
        """
        voxels of a half-open region

        :param start: five integers X, Y, Z, C, T
        :param stop: five integers X, Y, Z, C, T
        :return: numpy.ndarray (T, C, Z, Y, X)
        """
        shape = tuple(stop[d] - start[d] for d in (4, 3, 2, 1, 0))
        dtype = self.data_type.numpy_dtype
        if self.name == 'zeros':
            return numpy.zeros(shape, dtype=dtype)
        t, c, z, y, x = _coordinates(start, stop)
        values = self.__ramp(t, c, z, y, x)
        if self.name == 'smooth-noise':
            values = values + self.__noise(t, c, z, y, x)
        values = numpy.broadcast_to(values, shape)
        if self.data_type.is_integer:
            return numpy.floor(values).astype(dtype)
        return values.astype(dtype)


class RawVolumeSource():
    """
    A headerless raw volume file, X fastest, little-endian voxels.

    :param path: PathLike
    :param image_size: Size5D
    :param data_type: DataType
    """
    def __init__(self, path, image_size, data_type):
        self.path = path
        self.image_size = Size5D.of(image_size)
        self.data_type = data_type
        size = self.image_size
        expected = size.product() * data_type.bytes_per_element
        actual = os.path.getsize(path)
        if actual != expected:
            raise LayoutError(f'raw file {path} has {actual} bytes, {tuple(size)} '
                              f'{data_type.label} needs {expected}')
        self.__volume = numpy.memmap(path, dtype=data_type.numpy_dtype, mode='r',
                                     shape=(size.t, size.c, size.z, size.y, size.x))

    def __repr__(self):
        return 'RawVolumeSource(path=%r, image_size=%r, data_type=%s)' % (
            self.path, tuple(self.image_size), self.data_type.label)

    def region(self, start, stop):
        """ see SyntheticSource.region """
        return numpy.array(self.__volume[to_array_slices(start, stop)])


def iter_block_indices(counts, order='XYZCT'):
    """
    input block indices in streaming order, the first letter of order varying fastest

    :param counts: Size5D blocks per dimension
    :param order: str or DimensionSequence5D
    :return: generator of BlockIndex5D
    """
    order = DimensionSequence5D.parse(order) if isinstance(order, str) else \
        DimensionSequence5D(order)
    counts = Size5D.of(counts)
    total = counts.product()
    for linear in range(total):
        position = [0] * 5
        for dimension in order:
            linear, position[dimension] = divmod(linear, counts[dimension])
        yield BlockIndex5D.of(position)


def input_block(source, layout, index, padding_value=0):
    """
    produce one input block the way a caller of copy_block would: the in-image region,
    padded to the full block size, stored in the layout's input sequence

    :param source: SyntheticSource or RawVolumeSource
    :param layout: ImageLayout
    :param index: BlockIndex5D
    :param padding_value: value of the voxels beyond the image
    :return: bytes
    """
    start, stop = block_region(index, layout.input_block_size, layout.image_size)
    region = source.region(start, stop)
    full_shape = tuple(layout.input_block_size[d] for d in (4, 3, 2, 1, 0))
    if region.shape != full_shape:
        padded = numpy.full(full_shape, padding_value, dtype=layout.data_type.numpy_dtype)
        padded[tuple(slice(0, extent) for extent in region.shape)] = region
        region = padded
    return pack_input_block(region, layout.input_sequence)


def stream_blocks(source, layout, order='XYZCT', padding_value=0):
    """
    every input block of an image in streaming order

    :return: generator of (bytes, BlockIndex5D)
    """
    counts = Size5D.of(ceil_div(s, b) for s, b in zip(layout.image_size,
                                                      layout.input_block_size))
    for index in iter_block_indices(counts, order):
        yield input_block(source, layout, index, padding_value), index


def open_source(layout, synthetic=None, raw_path=None, seed=0):
    """
    the source named by command line style arguments
    """
    if synthetic and raw_path:
        raise LayoutError('give either a synthetic volume or a raw file, not both')
    if synthetic:
        return SyntheticSource(synthetic, layout.image_size, layout.data_type, seed)
    if raw_path:
        return RawVolumeSource(raw_path, layout.image_size, layout.data_type)
    raise LayoutError('an input is required: a synthetic volume or a raw file')
