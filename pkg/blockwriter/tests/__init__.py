from itertools import product
from os import path

import numpy

from blockwriter.compression import CompressionSpec
from blockwriter.ingest import WriterOptions, create_writer
from blockwriter.sources import stream_blocks
from blockwriter.types import ImageExtent

FIXTURE_DIRECTORY = path.join(path.dirname(__file__), 'fixtures')

# image (3,2,2,2,1) u16, internal block (2,2,2), codec none with shuffle,
# two levels: (3,2,2) and (2,2,2) with X halved; payloads stored out of index order;
# extent (0,0,0)-(1.5,1,1); parameters Image:ImageSizeInMB=2400;
# channel 0 red with range (0, 65535), channel 1 green with range (0, 4095);
# one timepoint '2020-01-01 00:00:00.000'
TINY_FIXTURE = path.join(FIXTURE_DIRECTORY, 'tiny_u16.bwmr')
TINY_FIXTURE_SIZE = 609
TINY_FIXTURE_PAYLOADS = (180, 276)


def tiny_fixture_value(x, y, z, c):
    """ level 0 voxel of the tiny fixture """
    return 1000 * c + 100 * z + 10 * y + x + 1


def write_image(file_path, layout, source, compression=None, order='XYZCT', thread_count=2,
                **finish_arguments):
    """
    stream a whole source into a container
    :return: WriteSummary
    """
    options = WriterOptions(thread_count=thread_count,
                            compression=compression or CompressionSpec.parse('gzip:2'))
    with create_writer(layout, ImageExtent.for_voxels(layout.image_size), options,
                       output_path=file_path) as writer:
        for data, index in stream_blocks(source, layout, order):
            writer.copy_block(data, index)
        return writer.finish(**finish_arguments)


def source_volume(source, layout, c, t):
    """ one (z, y, x) volume of a source """
    size = layout.image_size
    return source.region((0, 0, 0, c, t), (size.x, size.y, size.z, c + 1, t + 1))[0, 0]


def brute_force_downsample(volume, halved):
    """
    one level of window means by explicit loops over target voxels,
    integers rounded half away from zero
    """
    size_z, size_y, size_x = volume.shape
    halve_x, halve_y, halve_z = halved
    shape = tuple(-(-extent // 2) if halve else extent
                  for extent, halve in ((size_z, halve_z), (size_y, halve_y), (size_x, halve_x)))
    result = numpy.zeros(shape, dtype=volume.dtype)
    for z, y, x in product(*(range(extent) for extent in shape)):
        window = volume[(2 * z if halve_z else z):(2 * z + 2 if halve_z else z + 1),
                        (2 * y if halve_y else y):(2 * y + 2 if halve_y else y + 1),
                        (2 * x if halve_x else x):(2 * x + 2 if halve_x else x + 1)]
        population = window.size
        if volume.dtype.kind == 'f':
            result[z, y, x] = float(window.sum(dtype=numpy.float64)) / population
        else:
            total = int(window.sum(dtype=numpy.int64))
            result[z, y, x] = (2 * total + population) // (2 * population)
    return result
