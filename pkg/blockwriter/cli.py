"""
Command line entry point: convert, bench, inspect and verify.

Exit codes: 0 success, 1 usage, 2 input/output, 3 verification mismatch.
"""

from argparse import ArgumentParser
from configparser import Error as ConfigError
import logging
import sys

import numpy

from .bench import (DEFAULT_METHODS, DEFAULT_THREADS, enable_bench_debug_logging, run_bench,
                    run_memory_orders)
from .compression import CompressionSpec, enable_compression_debug_logging
from .config import (enable_config_debug_logging, get_backend, get_compression, get_config,
                     get_internal_block, get_oracle_max_voxels, get_thread_count)
from .container import enable_container_debug_logging
from .errors import (BlockWriterError, CodecError, LayoutError, RegionError,
                     VerificationError)
from .geometry import enable_geometry_debug_logging
from .ingest import WriterOptions, create_writer, enable_ingest_debug_logging
from .pyramid import build_pyramid, enable_pyramid_debug_logging
from .reader import enable_reader_debug_logging, open_image
from .sources import SYNTHETIC_NAMES, enable_sources_debug_logging, open_source, stream_blocks
from .task_queue import enable_task_queue_debug_logging
from .types import DataType, DimensionSequence5D, ImageExtent, ImageLayout, Size5D


EXIT_SUCCESS = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_MISMATCH = 3


class _ArgumentParser(ArgumentParser):
    """ argparse with the usage exit code of this tool """
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def __setup_debugging(user_config, verbose=False):
    log_level = {
        'debug': logging.DEBUG,
        'info': logging.INFO,
        'warn': logging.WARN,
        'warning': logging.WARNING,
        'error': logging.ERROR,
        'fatal': logging.FATAL,
        'critical': logging.CRITICAL
    }.get(user_config.get('logging', 'log_level', fallback='warning'), logging.WARNING)
    if verbose:
        log_level = logging.DEBUG

    config_flag_actions = [
        ('debug', 'geometry', enable_geometry_debug_logging),
        ('debug', 'compression', enable_compression_debug_logging),
        ('debug', 'task_queue', enable_task_queue_debug_logging),
        ('debug', 'pyramid', enable_pyramid_debug_logging),
        ('debug', 'ingest', enable_ingest_debug_logging),
        ('debug', 'container', enable_container_debug_logging),
        ('debug', 'reader', enable_reader_debug_logging),
        ('debug', 'sources', enable_sources_debug_logging),
        ('debug', 'bench', enable_bench_debug_logging),
        ('debug', 'config', enable_config_debug_logging),
        ]

    for section, key, action in config_flag_actions:
        try:
            if verbose or user_config.getboolean(section, key, fallback=False):
                action()
        except ValueError:
            pass

    file_name = user_config.get('logging', 'file_name', fallback=None)
    file_mode = user_config.get('logging', 'file_mode', fallback='w') if file_name else None
    logging.basicConfig(level=log_level, filename=file_name, filemode=file_mode)


def _parse_parameters(entries):
    """
    :param entries: [str] each 'Section:Name=Value'
    :return: {section: {name: value}}
    """
    parameters = {}
    for entry in entries or []:
        section, separator, assignment = entry.partition(':')
        name, equals, value = assignment.partition('=')
        if not separator or not equals or not section or not name:
            raise LayoutError(f'--parameter expects Section:Name=Value, got {entry!r}')
        parameters.setdefault(section, {})[name] = value
    return parameters


def _internal_block(text):
    try:
        values = tuple(int(part) for part in text.split(','))
    except ValueError:
        values = ()
    if len(values) != 3:
        raise LayoutError(f'--internal-block expects X,Y,Z, got {text!r}')
    return values


def _layout(arguments, config, internal_block=None):
    if arguments.size is None:
        raise LayoutError('--size X,Y,Z,C,T is required')
    size = Size5D.parse(arguments.size)
    block = Size5D.parse(arguments.block) if arguments.block else Size5D(size.x, size.y, 1, 1, 1)
    if internal_block is None:
        internal_block = _internal_block(arguments.internal_block) \
            if arguments.internal_block else get_internal_block(config)
    return ImageLayout(image_size=size, data_type=DataType.parse(arguments.dtype),
                       input_block_size=block, internal_block_size=internal_block)


def _source(arguments, layout):
    return open_source(layout, synthetic=arguments.synthetic, raw_path=arguments.raw,
                       seed=arguments.seed)


def _compression(arguments, config):
    configured = get_compression(config)
    if arguments.compress is None:
        return CompressionSpec(configured.algorithm, configured.level,
                               configured.shuffle or arguments.shuffle)
    return CompressionSpec.parse(arguments.compress, shuffle=arguments.shuffle)


def _print_summary(summary):
    print(f'chunks:            {summary.chunk_count}')
    for level, (stored, raw) in enumerate(zip(summary.level_bytes, summary.level_raw_bytes)):
        print(f'level {level}:           {stored} bytes stored, {raw} bytes raw')
    print(f'input bytes:       {summary.input_bytes}')
    print(f'file bytes:        {summary.file_bytes}')
    print(f'compression ratio: {summary.compression_ratio:.3f}')
    print(f'peak memory bytes: {summary.peak_bytes}')


def cmd_convert(arguments, config):
    """
    stream an input volume into a container
    """
    logger = logging.getLogger(__name__)
    layout = _layout(arguments, config)
    source = _source(arguments, layout)
    order = DimensionSequence5D.parse(arguments.order)
    extent = ImageExtent.of(arguments.extent.split(',')) \
        if arguments.extent else ImageExtent.for_voxels(layout.image_size)
    options = WriterOptions(thread_count=arguments.threads or get_thread_count(config),
                            compression=_compression(arguments, config),
                            force_block_z1=arguments.force_z1)
    parameters = _parse_parameters(arguments.parameter)

    def progress_(fraction):
        logger.debug('cmd_convert: progress: %.3f', fraction)

    with create_writer(layout, extent, options, output_path=arguments.output,
                       backend=get_backend(config), progress=progress_) as writer:
        for data, index in stream_blocks(source, layout, order, arguments.padding):
            writer.copy_block(data, index)
        summary = writer.finish(parameters=parameters)
    print(f'wrote {arguments.output}')
    _print_summary(summary)
    return EXIT_SUCCESS


def cmd_bench(arguments, config):
    """
    measure throughput and compression ratio, or peak memory per block order
    """
    layout = _layout(arguments, config)
    source = open_source(layout, synthetic=arguments.synthetic, seed=arguments.seed)
    if arguments.orders:
        orders = [DimensionSequence5D.parse(order) for order in arguments.orders.split(',')]
        report = run_memory_orders(layout, source, orders, backend=get_backend(config))
    else:
        try:
            thread_counts = [int(part) for part in arguments.threads.split(',')] \
                if arguments.threads else list(DEFAULT_THREADS)
        except ValueError:
            raise LayoutError(f'--threads expects a comma separated list, got '
                              f'{arguments.threads!r}')
        if min(thread_counts) < 1:
            raise LayoutError('--threads values must be >= 1')
        methods = [CompressionSpec.parse(method) for method in arguments.methods.split(',')] \
            if arguments.methods else [CompressionSpec.parse(m) for m in DEFAULT_METHODS]
        report = run_bench(layout, source, methods, thread_counts,
                           order=DimensionSequence5D.parse(arguments.order),
                           repeat=arguments.repeat, backend=get_backend(config))
    print(report.format_table())
    if arguments.csv:
        report.write_csv(arguments.csv)
    return EXIT_SUCCESS


def _format_values(values):
    return ', '.join(f'{value:g}' for value in values)


def cmd_inspect(arguments, _config):
    """
    describe a container
    """
    handle = open_image(arguments.path)
    size = handle.image_size
    extent = handle.extent
    print(f'file:           {arguments.path}')
    print(f'data type:      {handle.data_type.label}')
    print(f'image size:     {size.x},{size.y},{size.z},{size.c},{size.t}')
    print('internal block: ' + ','.join(str(v) for v in handle.plan.internal_block))
    print(f'extent:         ({_format_values(extent.as_tuple()[:3])}) - '
          f'({_format_values(extent.as_tuple()[3:])})')
    print(f'voxel size:     ({_format_values(handle.voxel_size(0))})')
    print(f'levels:         {len(handle.plan)}')
    for level_number, level in enumerate(handle.plan):
        halved = ''.join(axis for axis, halve in zip('XYZ', level.halved) if halve) or '-'
        count_x, count_y, count_z = level.chunk_counts
        print(f'  level {level_number}: size {"x".join(str(v) for v in level.size)}, '
              f'halved {halved}, chunks {count_x}x{count_y}x{count_z} per volume, '
              f'{handle.plan.chunk_count(level_number, size.c, size.t)} total, '
              f'{handle.stored_bytes(level_number)} bytes stored, '
              f'voxel size ({_format_values(handle.voxel_size(level_number))})')
    print('parameters:')
    for section, entries in handle.parameters.items():
        for name, value in entries.items():
            print(f'  {section}:{name}={value}')
    for channel, info in enumerate(handle.metadata.color_info):
        print(f'channel {channel}: color ({_format_values(info.color)}) '
              f'range ({_format_values(info.display_range)})')
    for timepoint, info in enumerate(handle.metadata.time_info):
        print(f'timepoint {timepoint}: {info.timestamp!r}')
    return EXIT_SUCCESS


def _first_difference(expected, actual, c, t):
    """ (x, y, z, c, t) of the first differing voxel of two (z, y, x) volumes, or None """
    differing = numpy.argwhere(expected != actual)
    if not len(differing):
        return None
    z, y, x = (int(v) for v in differing[0])
    return (x, y, z, c, t)


def cmd_verify(arguments, config):
    """
    compare a container with the input it was converted from
    """
    logger = logging.getLogger(__name__)
    handle = open_image(arguments.path)
    layout = _layout(arguments, config, internal_block=handle.plan.internal_block)
    if handle.image_size != layout.image_size or handle.data_type is not layout.data_type:
        raise VerificationError(f'file holds {tuple(handle.image_size)} '
                                f'{handle.data_type.label}, input is '
                                f'{tuple(layout.image_size)} {layout.data_type.label}')
    source = _source(arguments, layout)
    size = layout.image_size
    oracle = size.x * size.y * size.z <= get_oracle_max_voxels(config)
    try:
        for t in range(size.t):
            for c in range(size.c):
                expected = source.region((0, 0, 0, c, t), (size.x, size.y, size.z, c + 1, t + 1))
                expected = expected[0, 0]
                coordinate = _first_difference(expected, handle.read_level(0, c, t), c, t)
                if coordinate is not None:
                    raise VerificationError('level 0 differs from the input', coordinate)
                if not oracle:
                    continue
                for level, level_expected in enumerate(build_pyramid(expected, handle.plan)):
                    coordinate = _first_difference(level_expected,
                                                   handle.read_level(level, c, t), c, t)
                    if coordinate is not None:
                        raise VerificationError(f'level {level} differs from the reduced '
                                                f'input', coordinate)
    except CodecError as error:
        raise VerificationError(f'unreadable chunk: {error}')
    if oracle:
        print(f'verified {arguments.path}: all {len(handle.plan)} levels match')
    else:
        logger.warning('cmd_verify: %d voxels per volume, pyramid check skipped',
                       size.x * size.y * size.z)
        print(f'verified {arguments.path}: level 0 matches, pyramid check skipped')
    return EXIT_SUCCESS


def _add_input_arguments(parser, size_required=False):
    parser.add_argument('--size', required=size_required, help='image size X,Y,Z,C,T')
    parser.add_argument('--block', help='input block size X,Y,Z,C,T (default X,Y,1,1,1)')
    parser.add_argument('--dtype', default='u16', help='u8, u16, u32 or f32 (default u16)')
    parser.add_argument('--synthetic', choices=SYNTHETIC_NAMES, help='synthetic volume')
    parser.add_argument('--seed', type=int, default=0, help='seed of the synthetic volume')
    parser.add_argument('--internal-block', help='chunk size X,Y,Z (default from config)')


def build_parser():
    """
    :return: ArgumentParser of all subcommands
    """
    parser = _ArgumentParser(prog='blockwriter',
                             description='blockwise multi-resolution image writer')
    parser.add_argument('--config', help='configuration file overriding ~/.blockwriter.ini')
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    subparsers = parser.add_subparsers(dest='subcommand', required=True)

    convert = subparsers.add_parser('convert', help='write a container from a volume')
    _add_input_arguments(convert)
    convert.add_argument('--raw', help='headerless raw volume, X fastest')
    convert.add_argument('--order', default='XYZCT', help='block streaming order')
    convert.add_argument('--compress', help='none, gzip:N or lz4 (default from config)')
    convert.add_argument('--shuffle', action='store_true', help='byte shuffle before encoding')
    convert.add_argument('--threads', type=int, help='compression threads')
    convert.add_argument('--force-z1', action='store_true', help='chunks one plane deep')
    convert.add_argument('--extent', help='minX,minY,minZ,maxX,maxY,maxZ')
    convert.add_argument('--parameter', action='append', help='Section:Name=Value')
    convert.add_argument('--padding', type=int, default=0, help='value of border padding')
    convert.add_argument('output', help='container to write')
    convert.set_defaults(command=cmd_convert)

    bench = subparsers.add_parser('bench', help='measure throughput, ratio and memory')
    bench.add_argument('--size', default='512,512,32,1,1', help='image size X,Y,Z,C,T')
    bench.add_argument('--block', help='input block size X,Y,Z,C,T (default X,Y,1,1,1)')
    bench.add_argument('--dtype', default='u16', help='u8, u16, u32 or f32 (default u16)')
    bench.add_argument('--synthetic', choices=SYNTHETIC_NAMES, default='smooth-noise')
    bench.add_argument('--seed', type=int, default=0)
    bench.add_argument('--internal-block', help='chunk size X,Y,Z (default from config)')
    bench.add_argument('--order', default='XYZCT', help='block streaming order')
    bench.add_argument('--methods', help='comma separated, e.g. none,gzip:2,shuffle+lz4')
    bench.add_argument('--threads', help='comma separated thread counts')
    bench.add_argument('--orders', help='peak memory per block order, e.g. XYZCT,XYCZT')
    bench.add_argument('--repeat', type=int, default=1, help='runs per row, fastest kept')
    bench.add_argument('--csv', help='also write the rows to this CSV file')
    bench.set_defaults(command=cmd_bench)

    inspect = subparsers.add_parser('inspect', help='describe a container')
    inspect.add_argument('path')
    inspect.set_defaults(command=cmd_inspect)

    verify = subparsers.add_parser('verify', help='compare a container with its input')
    _add_input_arguments(verify)
    verify.add_argument('--raw', help='headerless raw volume, X fastest')
    verify.add_argument('path')
    verify.set_defaults(command=cmd_verify)
    return parser


def main(argv=None):
    """
    runs the command line tool
    :return: int exit code
    """
    arguments = build_parser().parse_args(argv)
    try:
        config = get_config(arguments.config)
    except (OSError, ConfigError) as error:
        print(f'blockwriter: {error}', file=sys.stderr)
        return EXIT_USAGE
    __setup_debugging(config, arguments.verbose)
    logger = logging.getLogger(__name__)
    logger.debug('main: arguments: %r', arguments)

    try:
        return arguments.command(arguments, config)
    except VerificationError as error:
        print(f'blockwriter: mismatch: {error}', file=sys.stderr)
        return EXIT_MISMATCH
    except (LayoutError, RegionError) as error:
        print(f'blockwriter: {error}', file=sys.stderr)
        return EXIT_USAGE
    except (OSError, BlockWriterError) as error:
        print(f'blockwriter: {error}', file=sys.stderr)
        return EXIT_IO


if __name__ == '__main__':
    sys.exit(main())
