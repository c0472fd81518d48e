from random import Random
import threading
from time import sleep

from pytest import raises

from blockwriter import task_queue
from blockwriter.compression import CompressionSpec, compress_chunk, decompress_chunk
from blockwriter.errors import LayoutError, PipelineClosedError, PipelineError
from blockwriter.task_queue import CompressionQueue, Task, default_thread_count
from blockwriter.types import ChunkIndex


def _raw(number):
    return bytes([number % 251]) * 2048


def test_task_keeps_result_and_exception():
    assert Task(lambda: 42, 'answer').execute_().result == 42
    failed = Task(lambda: 1 // 0, 'division').execute_()
    assert failed.failed and failed.finished
    assert isinstance(failed.exception, ZeroDivisionError)


def test_default_thread_count_is_positive():
    assert default_thread_count() >= 1


def test_single_worker_keeps_submission_order():
    received = []
    queue = CompressionQueue(received.append, CompressionSpec.parse('lz4'), 2, max_workers=1)
    submitted = [ChunkIndex(0, 0, number % 7, number // 7, 0) for number in range(60)]
    for number, index in enumerate(submitted):
        queue.submit(number % 3, index, _raw(number))
    queue.drain()
    assert [(chunk.level, chunk.index) for chunk in received] == \
        [(number % 3, index) for number, index in enumerate(submitted)]


def test_every_chunk_reaches_the_consumer_once(monkeypatch):
    received = []
    threads = set()
    rng = Random(8)
    delays = [rng.random() / 1000 for _ in range(1000)]

    def delayed_compress_chunk(raw, spec, element_size):
        sleep(delays[raw[0] + 251 * raw[1]])
        return compress_chunk(raw, spec, element_size)

    def consumer(chunk):
        threads.add(threading.get_ident())
        received.append(chunk)

    def numbered(number):
        return bytes([number % 251, number // 251]) + _raw(number)[2:]

    monkeypatch.setattr(task_queue, 'compress_chunk', delayed_compress_chunk)
    spec = CompressionSpec.parse('shuffle+gzip:2')
    queue = CompressionQueue(consumer, spec, 2, max_workers=8)
    for number in range(1000):
        queue.submit(0, ChunkIndex(0, 0, number, 0, 0), numbered(number))
    queue.drain()
    assert sorted(chunk.index.bz for chunk in received) == list(range(1000))
    assert len(threads) == 1
    for chunk in received:
        assert chunk.codec_code == spec.codec_code
        assert decompress_chunk(chunk.payload, spec, chunk.raw_length, 2,
                                checksum=chunk.checksum) == numbered(chunk.index.bz)


def test_submission_blocks_while_the_queue_is_full():
    lock = threading.Lock()
    counts = {'consumed': 0}
    in_flight = []

    def slow_consumer(_):
        sleep(0.002)
        with lock:
            counts['consumed'] += 1

    queue = CompressionQueue(slow_consumer, CompressionSpec.parse('none'), 1, max_workers=2)
    for number in range(40):
        queue.submit(0, ChunkIndex(0, 0, number, 0, 0), _raw(number))
        with lock:
            in_flight.append(number + 1 - counts['consumed'])
    queue.drain()
    assert counts['consumed'] == 40
    assert max(in_flight) <= 4


def test_worker_failure_surfaces_at_drain():
    queue = CompressionQueue(lambda chunk: None, CompressionSpec.parse('shuffle+lz4'), 2,
                             max_workers=2)
    queue.submit(0, ChunkIndex(0, 0, 0, 0, 0), b'\x01\x02\x03')
    with raises(PipelineError) as error:
        queue.drain()
    assert isinstance(error.value.__cause__, LayoutError)


def test_consumer_failure_surfaces_at_next_submit_or_drain():
    def failing_consumer(_):
        raise OSError('disk full')

    queue = CompressionQueue(failing_consumer, CompressionSpec.parse('none'), 1, max_workers=1)
    queue.submit(0, ChunkIndex(0, 0, 0, 0, 0), _raw(0))
    with raises(PipelineError) as error:
        for number in range(1, 100):
            sleep(0.001)
            queue.submit(0, ChunkIndex(0, 0, number, 0, 0), _raw(number))
        queue.drain()
    assert isinstance(error.value.__cause__, OSError)
    queue.abort()


def test_submit_after_drain():
    queue = CompressionQueue(lambda chunk: None, CompressionSpec.parse('lz4'), 1, max_workers=1)
    queue.drain()
    with raises(PipelineClosedError):
        queue.submit(0, ChunkIndex(0, 0, 0, 0, 0), _raw(0))
