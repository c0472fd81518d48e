from itertools import product

import numpy
from pytest import approx, mark, raises

from blockwriter.errors import LayoutError
from blockwriter.geometry import (block_count, block_region, delinearize, linear_offset,
                                  pack_input_block, unpack_input_block, voxel_size)
from blockwriter.types import (BlockIndex5D, DataType, DimensionSequence5D, ImageExtent,
                               ImageLayout, Size5D)


def test_voxel_size_of_a_large_image():
    extent = ImageExtent(0, 0, 0, 10, 10, 10)
    assert voxel_size(extent, Size5D(2048, 2048, 100, 3, 1)) == \
        approx((10 / 2048, 10 / 2048, 0.1))


def test_voxel_size_identity_and_symmetric_span():
    assert voxel_size(ImageExtent(0, 0, 0, 1, 1, 1), Size5D(1, 1, 1, 1, 1)) == (1, 1, 1)
    assert voxel_size(ImageExtent(-5, 0, 0, 5, 1, 1), Size5D(10, 1, 1, 1, 1))[0] == 1


def test_voxel_size_invariant_under_translation():
    size = Size5D(7, 3, 5, 1, 1)
    shifted = ImageExtent(100.5, -3, 7, 110.5, 1, 17)
    assert voxel_size(ImageExtent(0, 0, 0, 10, 4, 10), size) == approx(voxel_size(shifted, size))


def test_image_extent_requires_max_above_min():
    with raises(LayoutError):
        ImageExtent(0, 0, 0, 0, 1, 1)


def test_block_count_examples():
    counts = block_count(Size5D(2048, 2048, 100, 3, 5), Size5D(512, 512, 1, 1, 2))
    assert counts == (4, 4, 100, 3, 3)


def test_block_count_bounds():
    for size, block in product(range(1, 30), range(1, 12)):
        count = block_count(Size5D(size, 1, 1, 1, 1), Size5D(block, 1, 1, 1, 1)).x
        assert count * block >= size >= (count - 1) * block + 1


def test_linear_offset_examples():
    block = Size5D(512, 512, 1, 1, 1)
    assert linear_offset((1, 0, 0, 0, 0), block, DimensionSequence5D('XYZCT')) == 1
    assert linear_offset((0, 1, 0, 0, 0), block, DimensionSequence5D('XYZCT')) == 512
    assert linear_offset((0, 1, 0, 0, 0), block, DimensionSequence5D('YXZCT')) == 1


def test_linear_offset_out_of_range():
    with raises(LayoutError):
        linear_offset((2, 0, 0, 0, 0), Size5D(2, 1, 1, 1, 1), DimensionSequence5D('XYZCT'))


@mark.parametrize('sequence', ['XYZCT', 'YXZCT', 'TCZYX', 'CXTYZ'])
def test_delinearize_inverts_linear_offset(sequence):
    block = Size5D(3, 2, 4, 2, 3)
    sequence = DimensionSequence5D.parse(sequence)
    offsets = set()
    for position in product(*(range(extent) for extent in block)):
        offset = linear_offset(position, block, sequence)
        assert delinearize(offset, block, sequence) == position
        offsets.add(offset)
    assert offsets == set(range(block.product()))


def test_size_and_index_validation():
    with raises(LayoutError):
        Size5D(0, 1, 1, 1, 1)
    with raises(LayoutError):
        BlockIndex5D(-1, 0, 0, 0, 0)
    with raises(LayoutError):
        Size5D.parse('1,2,3')
    assert Size5D.parse('2048,2048,100,3,1') == (2048, 2048, 100, 3, 1)


def test_dimension_sequence_must_be_a_permutation():
    with raises(LayoutError):
        DimensionSequence5D.parse('XXZCT')
    with raises(LayoutError):
        DimensionSequence5D.parse('XYZC')
    assert str(DimensionSequence5D.parse('X,Y,C,Z,T')) == 'XYCZT'


def test_data_type_sizes():
    assert [t.bytes_per_element for t in DataType] == [1, 2, 4, 4]
    assert DataType.parse('u16') is DataType.U16
    with raises(LayoutError):
        DataType.parse('i16')


def test_layout_internal_block_bytes():
    layout = ImageLayout(image_size=(2048, 2048, 100, 3, 1), data_type=DataType.U16,
                         input_block_size=(512, 512, 1, 1, 1))
    assert layout.internal_block_size == (256, 256, 8)
    assert layout.internal_block_bytes == 1024 * 1024
    with raises(LayoutError):
        ImageLayout(image_size=(4, 4, 4, 1, 1), data_type=DataType.U8,
                    input_block_size=(4, 4, 1, 1, 1), internal_block_size=(4, 0, 4))


@mark.parametrize('sequence', ['XYZCT', 'YXZCT', 'ZTCXY'])
def test_unpack_input_block_honors_the_sequence(sequence):
    sequence = DimensionSequence5D.parse(sequence)
    block = Size5D(4, 3, 2, 2, 1)
    rng = numpy.random.default_rng(7)
    volume = rng.integers(0, 65535, size=(1, 2, 2, 3, 4), dtype=numpy.uint16)
    data = pack_input_block(volume, sequence)
    flat = numpy.frombuffer(data, dtype='<u2')
    for x, y, z, c in product(range(4), range(3), range(2), range(2)):
        assert flat[linear_offset((x, y, z, c, 0), block, sequence)] == volume[0, c, z, y, x]
    unpacked = unpack_input_block(data, block, sequence, numpy.dtype('<u2'))
    assert numpy.array_equal(unpacked, volume)


def test_unpack_input_block_wrong_length():
    with raises(LayoutError):
        unpack_input_block(b'\0' * 10, Size5D(2, 2, 1, 1, 1), DimensionSequence5D('XYZCT'),
                           numpy.dtype('<u2'))


def test_block_region_clips_border_blocks():
    start, stop = block_region(BlockIndex5D(1, 0, 0, 0, 0), Size5D(4, 4, 1, 1, 1),
                               Size5D(5, 4, 1, 1, 1))
    assert start == (4, 0, 0, 0, 0)
    assert stop == (5, 4, 1, 1, 1)
