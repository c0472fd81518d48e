"""
Pure arithmetic on sizes, indices and dimension sequences.

Arrays handed between modules use the axis order (T, C, Z, Y, X), which is
numpy's C order for an X-fastest memory layout.
"""

import logging

import numpy

from .errors import LayoutError
from .types import Dimension, DimensionSequence5D, Size5D


logging.getLogger(__name__).setLevel(logging.INFO)
def enable_geometry_debug_logging():
    """ enable geometry debug logging """
    logging.getLogger(__name__).setLevel(logging.DEBUG)

# position of each Dimension in a (T, C, Z, Y, X) array
ARRAY_AXIS = {
    Dimension.T: 0,
    Dimension.C: 1,
    Dimension.Z: 2,
    Dimension.Y: 3,
    Dimension.X: 4,
}


def voxel_size(extent, image_size):
    """
    physical size of one voxel along X, Y and Z

    :param extent: ImageExtent
    :param image_size: Size5D
    :return: (float, float, float)
    """
    return ((extent.max_x - extent.min_x) / image_size.x,
            (extent.max_y - extent.min_y) / image_size.y,
            (extent.max_z - extent.min_z) / image_size.z)


def ceil_div(numerator, denominator):
    return -(-numerator // denominator)


def block_count(image_size, block_size):
    """
    number of blocks per dimension needed to cover the image

    :param image_size: Size5D
    :param block_size: Size5D
    :return: Size5D
    """
    return Size5D.of(ceil_div(size, block) for size, block in zip(image_size, block_size))


def strides(block_size, sequence):
    """
    element stride of every dimension inside one block stored in the given sequence

    :return: [int] indexed by Dimension
    """
    result = [0] * 5
    stride = 1
    for dimension in sequence:
        result[dimension] = stride
        stride *= block_size[dimension]
    return result


def linear_offset(position, block_size, sequence):
    """
    element index of a position inside one input block, sequence[0] varying fastest

    :param position: five non-negative integers in X, Y, Z, C, T order
    :param block_size: Size5D
    :param sequence: DimensionSequence5D
    :return: int
    """
    position = tuple(position)
    if len(position) != 5:
        raise LayoutError(f'linear_offset: position needs 5 components, got {position!r}')
    for dimension, value, size in zip(Dimension, position, block_size):
        if not 0 <= value < size:
            raise LayoutError(f'linear_offset: {dimension.name}={value} outside of block '
                              f'size {size}')
    return sum(value * stride for value, stride in zip(position, strides(block_size, sequence)))


def delinearize(offset, block_size, sequence):
    """
    inverse of linear_offset

    :return: (int, int, int, int, int) position in X, Y, Z, C, T order
    """
    total = Size5D.of(block_size).product()
    if not 0 <= offset < total:
        raise LayoutError(f'delinearize: offset {offset} outside of block with {total} elements')
    position = [0] * 5
    for dimension in sequence:
        offset, position[dimension] = divmod(offset, block_size[dimension])
    return tuple(position)


def _memory_shape(block_size, sequence):
    """ numpy C-order shape of a block stored in sequence: slowest axis first """
    return [block_size[dimension] for dimension in reversed(DimensionSequence5D(sequence))]


def unpack_input_block(data, block_size, sequence, dtype):
    """
    view one input block's raw memory as a (T, C, Z, Y, X) array

    :param data: bytes-like or numpy array holding product(block_size) elements
    :param block_size: Size5D
    :param sequence: DimensionSequence5D memory order of data
    :param dtype: numpy dtype of one element
    :return: numpy.ndarray, a view where possible
    """
    if isinstance(data, numpy.ndarray):
        flat = numpy.ascontiguousarray(data).reshape(-1)
        if flat.dtype != dtype:
            if flat.dtype.itemsize * flat.size % dtype.itemsize:
                raise LayoutError(f'unpack_input_block: {flat.nbytes} bytes is not a whole '
                                  f'number of {dtype} elements')
            flat = flat.view(dtype)
    else:
        buffer = memoryview(data).cast('B')
        if len(buffer) % dtype.itemsize:
            raise LayoutError(f'unpack_input_block: {len(buffer)} bytes is not a whole '
                              f'number of {dtype} elements')
        flat = numpy.frombuffer(buffer, dtype=dtype)
    expected = Size5D.of(block_size).product()
    if flat.size != expected:
        raise LayoutError(f'unpack_input_block: expected {expected} elements '
                          f'({expected * dtype.itemsize} bytes), got {flat.size}')
    reversed_sequence = list(reversed(DimensionSequence5D(sequence)))
    array = flat.reshape(_memory_shape(block_size, sequence))
    order = sorted(Dimension, key=lambda d: ARRAY_AXIS[d])
    return array.transpose([reversed_sequence.index(dimension) for dimension in order])


def pack_input_block(array, sequence):
    """
    inverse of unpack_input_block: store a (T, C, Z, Y, X) array in the memory order
    given by sequence

    :return: bytes
    """
    sequence = DimensionSequence5D(sequence)
    axes = [ARRAY_AXIS[dimension] for dimension in reversed(sequence)]
    return numpy.ascontiguousarray(numpy.transpose(array, axes)).tobytes()


def block_region(index, block_size, image_size):
    """
    the in-image part of a block

    :param index: BlockIndex5D
    :return: (start, stop) two tuples of five integers in X, Y, Z, C, T order, half-open
    """
    start = tuple(i * b for i, b in zip(index, block_size))
    stop = tuple(min(s + b, size) for s, b, size in zip(start, block_size, image_size))
    return start, stop


def overlapping_blocks(start, stop, block):
    """
    indices of the blocks of size `block` along one axis intersecting [start, stop)

    :return: range
    """
    if stop <= start:
        return range(0)
    return range(start // block, ceil_div(stop, block))


def to_array_slices(start, stop):
    """ (T, C, Z, Y, X) slices of a half-open X, Y, Z, C, T region """
    return tuple(slice(start[d], stop[d]) for d in sorted(Dimension, key=lambda d: ARRAY_AXIS[d]))
