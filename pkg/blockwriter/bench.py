"""
Throughput, compression ratio and peak memory measurements of the writer.

Every run streams a deterministic synthetic image through a complete convert,
finalize included, into a temporary file that is deleted afterwards.
"""

import csv
from dataclasses import dataclass, field, replace
import logging
from os import path
from tempfile import TemporaryDirectory
from time import perf_counter
from typing import List

from .compression import CompressionSpec
from .container import FILE_EXTENSION
from .ingest import WriterOptions, create_writer
from .sources import stream_blocks
from .task_queue import default_thread_count
from .types import ImageExtent


logging.getLogger(__name__).setLevel(logging.INFO)
def enable_bench_debug_logging():
    """ enable bench debug logging """
    logging.getLogger(__name__).setLevel(logging.DEBUG)

MEGABYTE = 1024 * 1024

# uncompressed, gzip level 2, lz4 and shuffled lz4 for throughput, shuffled gzip for ratios
DEFAULT_METHODS = ('none', 'gzip:2', 'lz4', 'shuffle+lz4', 'shuffle+gzip:2')
DEFAULT_THREADS = (1, 2, 4)


@dataclass
class BenchRow:
    """
    One measured convert.
    """
    method: str
    shuffle: bool
    thread_count: int
    input_mb: float
    seconds: float
    file_mb: float
    peak_memory_mb: float
    order: str = 'XYZCT'

    @property
    def mb_per_s(self):
        return self.input_mb / self.seconds if self.seconds > 0 else float('inf')

    @property
    def compression_ratio(self):
        return self.input_mb / self.file_mb if self.file_mb > 0 else float('inf')

    def as_record(self):
        return {
            'method': self.method,
            'shuffle': int(self.shuffle),
            'threads': self.thread_count,
            'order': self.order,
            'input_mb': f'{self.input_mb:.3f}',
            'seconds': f'{self.seconds:.3f}',
            'mb_per_s': f'{self.mb_per_s:.1f}',
            'file_mb': f'{self.file_mb:.3f}',
            'ratio': f'{self.compression_ratio:.3f}',
            'peak_memory_mb': f'{self.peak_memory_mb:.3f}',
        }


@dataclass
class BenchReport:
    """
    Rows of a bench run in measurement order.
    """
    rows: List[BenchRow] = field(default_factory=list)

    COLUMNS = ('method', 'shuffle', 'threads', 'order', 'input_mb', 'seconds', 'mb_per_s',
               'file_mb', 'ratio', 'peak_memory_mb')

    def write_csv(self, csv_path):
        with open(csv_path, 'w', newline='') as csv_file:
            writer = csv.DictWriter(csv_file, fieldnames=self.COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row.as_record())

    def format_table(self):
        records = [row.as_record() for row in self.rows]
        widths = {column: max([len(column)] + [len(str(record[column])) for record in records])
                  for column in self.COLUMNS}
        lines = ['  '.join(column.rjust(widths[column]) for column in self.COLUMNS)]
        for record in records:
            lines.append('  '.join(str(record[column]).rjust(widths[column])
                                   for column in self.COLUMNS))
        return '\n'.join(lines)


def measure_convert(layout, blocks, compression, thread_count, directory, order='XYZCT',
                    backend='reference'):
    """
    time one convert of pre-generated blocks, finalize included

    :param blocks: sequence of (bytes, BlockIndex5D)
    :return: (float seconds, WriteSummary)
    """
    logger = logging.getLogger(__name__)
    output_path = path.join(directory, f'bench{FILE_EXTENSION}')
    options = WriterOptions(thread_count=thread_count, compression=compression)
    start = perf_counter()
    with create_writer(layout, ImageExtent.for_voxels(layout.image_size), options,
                       output_path=output_path, backend=backend) as writer:
        for data, index in blocks:
            writer.copy_block(data, index)
        summary = writer.finish()
    seconds = perf_counter() - start
    logger.debug('measure_convert: %s %r threads %r: %.3f s', compression.label, order,
                 thread_count, seconds)
    return seconds, summary


def _row(compression, thread_count, order, seconds, summary):
    return BenchRow(method=replace(compression, shuffle=False).label,
                    shuffle=compression.shuffle,
                    thread_count=thread_count,
                    input_mb=summary.input_bytes / MEGABYTE,
                    seconds=seconds,
                    file_mb=summary.file_bytes / MEGABYTE,
                    peak_memory_mb=summary.peak_bytes / MEGABYTE,
                    order=order)


def run_bench(layout, source, methods=DEFAULT_METHODS, thread_counts=DEFAULT_THREADS,
              order='XYZCT', repeat=1, backend='reference'):
    """
    one row per (method, thread count); the input is generated once, before timing

    :param methods: iterable of str or CompressionSpec
    :param repeat: int runs per row, the fastest is reported
    :return: BenchReport
    """
    logger = logging.getLogger(__name__)
    blocks = list(stream_blocks(source, layout, order))
    report = BenchReport()
    with TemporaryDirectory() as directory:
        for method in methods:
            compression = method if isinstance(method, CompressionSpec) else \
                CompressionSpec.parse(method)
            for thread_count in thread_counts:
                seconds, summary = min(
                    (measure_convert(layout, blocks, compression, thread_count, directory, order,
                                     backend)
                     for _ in range(max(1, repeat))),
                    key=lambda measured: measured[0])
                row = _row(compression, thread_count, str(order), seconds, summary)
                logger.info('run_bench: %s threads %d: %.1f MB/s, ratio %.3f',
                            compression.label, thread_count, row.mb_per_s,
                            row.compression_ratio)
                report.rows.append(row)
    return report


def run_memory_orders(layout, source, orders, compression=None, thread_count=None,
                      backend='reference'):
    """
    peak memory of the same image streamed in different block orders

    :param orders: iterable of str such as 'XYZCT', 'XYCZT'
    :return: BenchReport, one row per order
    """
    logger = logging.getLogger(__name__)
    compression = compression or CompressionSpec.parse('none')
    report = BenchReport()
    with TemporaryDirectory() as directory:
        for order in orders:
            seconds, summary = measure_convert(layout, stream_blocks(source, layout, order),
                                               compression, thread_count, directory, order,
                                               backend)
            row = _row(compression, thread_count or default_thread_count(), str(order), seconds,
                       summary)
            logger.info('run_memory_orders: %s: peak %.3f MB', order, row.peak_memory_mb)
            report.rows.append(row)
    return report
