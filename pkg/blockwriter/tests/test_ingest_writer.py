"""
tests for streaming input blocks through ImageWriter
"""

from os import path
from random import Random
from tempfile import TemporaryDirectory

import numpy
from pytest import mark, raises

from blockwriter.compression import CompressionSpec
from blockwriter.errors import (BlockIndexError, DuplicateBlockError, LayoutError,
                                MissingBlocksError, TruncatedFileError, WriterFinishedError)
from blockwriter.ingest import WriterOptions, create_writer
from blockwriter.pyramid import build_pyramid
from blockwriter.reader import open_image
from blockwriter.sources import SyntheticSource, input_block, stream_blocks
from blockwriter.types import (BlockIndex5D, ChannelColorInfo, DataType, ImageExtent,
                               ImageLayout, TimePointInfo)
from . import source_volume, write_image


def _slab_layout():
    return ImageLayout(image_size=(4, 4, 4, 1, 1), data_type=DataType.U16,
                       input_block_size=(4, 4, 1, 1, 1), internal_block_size=(4, 4, 4))


def _writer(tmpdirname, layout, name='image.bwmr', **options):
    options.setdefault('thread_count', 2)
    return create_writer(layout, ImageExtent.for_voxels(layout.image_size),
                         WriterOptions(**options), output_path=path.join(tmpdirname, name))


def _assert_matches_source(file_path, layout, source):
    handle = open_image(file_path)
    size = layout.image_size
    for t in range(size.t):
        for c in range(size.c):
            expected = build_pyramid(source_volume(source, layout, c, t), handle.plan)
            for level, volume in enumerate(expected):
                assert numpy.array_equal(handle.read_level(level, c, t), volume), \
                    f'level {level} channel {c} timepoint {t}'


def test_chunk_dispatched_when_its_last_slice_arrives():
    layout = _slab_layout()
    source = SyntheticSource('ramp', layout.image_size, layout.data_type)
    with TemporaryDirectory() as tmpdirname:
        writer = _writer(tmpdirname, layout)
        assert writer.peak_memory_bytes() == 0
        assert writer.live_chunk_count == 0
        for z in range(3):
            writer.copy_block(input_block(source, layout, BlockIndex5D(0, 0, z, 0, 0)),
                              (0, 0, z, 0, 0))
        assert writer.live_chunk_count == 1
        assert writer.memory.current_bytes == 4 * 4 * 4 * 2
        writer.copy_block(input_block(source, layout, BlockIndex5D(0, 0, 3, 0, 0)),
                          (0, 0, 3, 0, 0))
        assert writer.live_chunk_count == 0
        assert writer.memory.current_bytes == 0
        assert writer.peak_memory_bytes() == 4 * 4 * 4 * 2
        summary = writer.finish()
        assert summary.chunk_count == 1
        assert summary.input_bytes == 128
        assert summary.level_raw_bytes == [128]
        assert summary.file_bytes == path.getsize(path.join(tmpdirname, 'image.bwmr'))
        _assert_matches_source(path.join(tmpdirname, 'image.bwmr'), layout, source)


def test_block_index_outside_of_the_grid():
    layout = _slab_layout()
    with TemporaryDirectory() as tmpdirname:
        with _writer(tmpdirname, layout) as writer:
            for index in ((0, 0, 4, 0, 0), (1, 0, 0, 0, 0), (0, 0, 0, 0, 1), (0, 0, -1, 0, 0)):
                with raises(BlockIndexError):
                    writer.copy_block(bytes(32), index)
            assert writer.missing_block_count == 4


def test_duplicate_block():
    layout = _slab_layout()
    with TemporaryDirectory() as tmpdirname:
        with _writer(tmpdirname, layout) as writer:
            writer.copy_block(bytes(32), (0, 0, 1, 0, 0))
            with raises(DuplicateBlockError):
                writer.copy_block(bytes(32), (0, 0, 1, 0, 0))
            assert writer.missing_block_count == 3


def test_wrong_block_length_is_rejected_before_it_counts():
    layout = _slab_layout()
    with TemporaryDirectory() as tmpdirname:
        with _writer(tmpdirname, layout) as writer:
            with raises(LayoutError):
                writer.copy_block(bytes(30), (0, 0, 0, 0, 0))
            writer.copy_block(bytes(32), (0, 0, 0, 0, 0))
            assert writer.missing_block_count == 3


def test_finish_with_missing_blocks():
    layout = _slab_layout()
    with TemporaryDirectory() as tmpdirname:
        with _writer(tmpdirname, layout) as writer:
            writer.copy_block(bytes(32), (0, 0, 0, 0, 0))
            with raises(MissingBlocksError) as error:
                writer.finish()
            assert error.value.missing_count == 3


def test_calls_after_finish():
    layout = _slab_layout()
    source = SyntheticSource('zeros', layout.image_size, layout.data_type)
    with TemporaryDirectory() as tmpdirname:
        writer = _writer(tmpdirname, layout)
        for data, index in stream_blocks(source, layout):
            writer.copy_block(data, index)
        writer.finish()
        with raises(WriterFinishedError):
            writer.copy_block(bytes(32), (0, 0, 0, 0, 0))
        with raises(WriterFinishedError):
            writer.finish()
        writer.close()


def test_padding_beyond_the_image_is_discarded():
    layout = ImageLayout(image_size=(5, 3, 2, 1, 1), data_type=DataType.U16,
                         input_block_size=(4, 4, 1, 1, 1), internal_block_size=(4, 2, 2))
    source = SyntheticSource('smooth-noise', layout.image_size, layout.data_type, seed=3)
    with TemporaryDirectory() as tmpdirname:
        file_path = path.join(tmpdirname, 'padded.bwmr')
        with _writer(tmpdirname, layout, name='padded.bwmr') as writer:
            for data, index in stream_blocks(source, layout, padding_value=7777):
                writer.copy_block(data, index)
            writer.finish()
        _assert_matches_source(file_path, layout, source)


def test_progress_reaches_one():
    layout = ImageLayout(image_size=(10, 6, 5, 2, 1), data_type=DataType.U8,
                         input_block_size=(4, 4, 2, 1, 1), internal_block_size=(4, 4, 4))
    source = SyntheticSource('ramp', layout.image_size, layout.data_type)
    reported = []
    with TemporaryDirectory() as tmpdirname:
        with create_writer(layout, ImageExtent.for_voxels(layout.image_size),
                           WriterOptions(thread_count=1),
                           output_path=path.join(tmpdirname, 'progress.bwmr'),
                           progress=reported.append) as writer:
            for data, index in stream_blocks(source, layout, order='ZCXYT'):
                writer.copy_block(data, index)
            writer.finish()
    assert reported == sorted(reported)
    assert reported[-1] == 1.0
    assert all(0.0 < value <= 1.0 for value in reported)


@mark.parametrize('order,thread_count', [('YXZCT', 1), ('ZTCYX', 4), ('CTZXY', 3)])
def test_contents_do_not_depend_on_order_or_threads(order, thread_count):
    layout = ImageLayout(image_size=(21, 18, 11, 2, 2), data_type=DataType.U16,
                         input_block_size=(8, 8, 3, 1, 1), internal_block_size=(8, 4, 4))
    source = SyntheticSource('smooth-noise', layout.image_size, layout.data_type, seed=11)
    with TemporaryDirectory() as tmpdirname:
        reference_path = path.join(tmpdirname, 'reference.bwmr')
        other_path = path.join(tmpdirname, 'other.bwmr')
        write_image(reference_path, layout, source)
        write_image(other_path, layout, source, order=order, thread_count=thread_count)
        reference, other = open_image(reference_path), open_image(other_path)
        assert reference.records.keys() == other.records.keys()
        for level, index in reference.records:
            assert reference.read_chunk(level, index) == other.read_chunk(level, index)
        _assert_matches_source(other_path, layout, source)


def test_input_sequence_does_not_change_contents():
    xyzct = ImageLayout(image_size=(9, 7, 6, 2, 1), data_type=DataType.F32,
                        input_block_size=(4, 4, 2, 2, 1), internal_block_size=(4, 4, 2))
    tczyx = ImageLayout(image_size=(9, 7, 6, 2, 1), data_type=DataType.F32,
                        input_block_size=(4, 4, 2, 2, 1), input_sequence='TCZYX',
                        internal_block_size=(4, 4, 2))
    source = SyntheticSource('smooth-noise', xyzct.image_size, xyzct.data_type, seed=2)
    with TemporaryDirectory() as tmpdirname:
        first, second = path.join(tmpdirname, 'xyzct.bwmr'), path.join(tmpdirname, 'tczyx.bwmr')
        write_image(first, xyzct, source)
        write_image(second, tczyx, source)
        one, other = open_image(first), open_image(second)
        for level, index in one.records:
            assert one.read_chunk(level, index) == other.read_chunk(level, index)


def test_force_block_z1():
    layout = ImageLayout(image_size=(16, 16, 6, 1, 1), data_type=DataType.U16,
                         input_block_size=(16, 16, 1, 1, 1), internal_block_size=(8, 8, 4))
    source = SyntheticSource('ramp', layout.image_size, layout.data_type)
    with TemporaryDirectory() as tmpdirname:
        file_path = path.join(tmpdirname, 'flat.bwmr')
        with _writer(tmpdirname, layout, name='flat.bwmr', force_block_z1=True) as writer:
            assert writer.layout.internal_block_size == (8, 8, 1)
            for data, index in stream_blocks(source, layout):
                writer.copy_block(data, index)
                assert writer.live_chunk_count < len(writer.plan)
            writer.finish()
        handle = open_image(file_path)
        assert handle.header.internal_block == (8, 8, 1)
        assert [level.size for level in handle.plan] == [(16, 16, 6), (8, 8, 3), (8, 8, 2),
                                                         (8, 8, 1)]
        _assert_matches_source(file_path, layout, source)


def test_peak_memory_stays_within_one_slab_of_chunks():
    layout = ImageLayout(image_size=(1024, 1024, 16, 1, 1), data_type=DataType.U16,
                         input_block_size=(1024, 1024, 1, 1, 1),
                         internal_block_size=(64, 64, 4))
    source = SyntheticSource('zeros', layout.image_size, layout.data_type)
    with TemporaryDirectory() as tmpdirname:
        summary = write_image(path.join(tmpdirname, 'slab.bwmr'), layout, source,
                              compression=CompressionSpec.parse('lz4'), thread_count=4)
    slab = 16 * 16 * layout.internal_block_bytes
    assert summary.peak_bytes >= slab
    assert summary.peak_bytes <= slab * 4 / 3 + layout.input_block_bytes


@mark.parametrize('internal_block', [(8, 8, 4), (7, 5, 3)])
def test_memory_account_tracks_live_buffers_in_any_order(internal_block):
    layout = ImageLayout(image_size=(40, 36, 12, 2, 1), data_type=DataType.U16,
                         input_block_size=(10, 12, 3, 1, 1), internal_block_size=internal_block)
    source = SyntheticSource('smooth-noise', layout.image_size, layout.data_type, seed=3)
    blocks = list(stream_blocks(source, layout))
    Random(sum(internal_block)).shuffle(blocks)
    with TemporaryDirectory() as tmpdirname:
        file_path = path.join(tmpdirname, 'shuffled.bwmr')
        with _writer(tmpdirname, layout, name='shuffled.bwmr') as writer:
            assert len(writer.plan) > 2
            for data, index in blocks:
                writer.copy_block(data, index)
                assert writer.memory.current_bytes == writer.buffered_bytes
                assert writer.memory.peak_bytes >= writer.memory.current_bytes
            assert writer.memory.current_bytes == writer.buffered_bytes == 0
            writer.finish()
        _assert_matches_source(file_path, layout, source)


def test_peak_memory_within_the_geometric_slab_bound():
    layout = ImageLayout(image_size=(128, 128, 32, 1, 1), data_type=DataType.U16,
                         input_block_size=(128, 128, 1, 1, 1), internal_block_size=(16, 16, 4))
    source = SyntheticSource('ramp', layout.image_size, layout.data_type)
    with TemporaryDirectory() as tmpdirname:
        summary = write_image(path.join(tmpdirname, 'bound.bwmr'), layout, source,
                              compression=CompressionSpec.parse('lz4'))
    slab = 8 * 8 * layout.internal_block_bytes
    bound = slab * sum(0.25 ** level for level in range(len(summary.level_bytes))) \
        + layout.input_block_bytes
    assert len(summary.level_bytes) == 4
    assert slab <= summary.peak_bytes <= bound


def test_default_metadata():
    layout = ImageLayout(image_size=(6, 5, 4, 2, 3), data_type=DataType.U16,
                         input_block_size=(6, 5, 4, 1, 1), internal_block_size=(4, 4, 4))
    source = SyntheticSource('zeros', layout.image_size, layout.data_type)
    with TemporaryDirectory() as tmpdirname:
        file_path = path.join(tmpdirname, 'defaults.bwmr')
        write_image(file_path, layout, source)
        handle = open_image(file_path)
        assert handle.parameters == {}
        assert handle.metadata.color_info == [ChannelColorInfo(display_range=(0.0, 65535.0))] * 2
        assert handle.metadata.time_info == [TimePointInfo()] * 3
        assert handle.extent == ImageExtent(0, 0, 0, 6, 5, 4)
        assert handle.voxel_size(0) == (1.0, 1.0, 1.0)


def test_metadata_round_trip():
    layout = ImageLayout(image_size=(8, 8, 2, 2, 1), data_type=DataType.U16,
                         input_block_size=(8, 8, 1, 1, 1), internal_block_size=(4, 4, 2))
    source = SyntheticSource('ramp', layout.image_size, layout.data_type)
    parameters = {'Image': {'ImageSizeInMB': '2400', 'Name': 'Kidney Ø 3'},
                  'Channel 1': {'Description': ''}}
    colors = [ChannelColorInfo(color=(1.0, 0.0, 0.0, 1.0), display_range=(0.0, 4095.0)),
              ChannelColorInfo(color=(0.0, 0.5, 0.0, 1.0), display_range=(100.0, 200.0))]
    times = [TimePointInfo('2020-01-01 00:00:00.000')]
    extent = ImageExtent(-4.0, 0.0, 1.0, 4.0, 2.0, 2.0)
    with TemporaryDirectory() as tmpdirname:
        file_path = path.join(tmpdirname, 'metadata.bwmr')
        write_image(file_path, layout, source, extent=extent, parameters=parameters,
                    time_info=times, color_info=colors)
        handle = open_image(file_path)
        assert handle.parameters == parameters
        assert handle.metadata.color_info == colors
        assert handle.metadata.time_info == times
        assert handle.extent == extent
        assert handle.voxel_size(0) == (1.0, 0.25, 0.5)
        assert handle.voxel_size(1) == (2.0, 0.5, 0.5)


def test_metadata_count_mismatch():
    layout = _slab_layout()
    source = SyntheticSource('zeros', layout.image_size, layout.data_type)
    with TemporaryDirectory() as tmpdirname:
        with _writer(tmpdirname, layout) as writer:
            for data, index in stream_blocks(source, layout):
                writer.copy_block(data, index)
            with raises(LayoutError):
                writer.finish(color_info=[ChannelColorInfo(), ChannelColorInfo()])
            with raises(LayoutError):
                writer.finish(parameters={'Image': {'ImageSizeInMB': 2400}})
            writer.finish()


def test_exception_inside_the_context_leaves_no_readable_file():
    layout = _slab_layout()
    with TemporaryDirectory() as tmpdirname:
        file_path = path.join(tmpdirname, 'aborted.bwmr')
        with raises(RuntimeError):
            with _writer(tmpdirname, layout, name='aborted.bwmr') as writer:
                writer.copy_block(bytes(32), (0, 0, 0, 0, 0))
                raise RuntimeError('input went away')
        with raises(WriterFinishedError):
            writer.copy_block(bytes(32), (0, 0, 1, 0, 0))
        with raises(TruncatedFileError):
            open_image(file_path)
