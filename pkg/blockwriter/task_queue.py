"""
This Module Provides the CompressionQueue and Task Classes

Task wraps one unit of work and keeps its result or exception, similar to
concurrent.futures.Future, but owned by the queue rather than the executor.
Each CompressionQueue uses a concurrent.futures.ThreadPoolExecutor for the work
and one consumer thread that hands finished tasks, one at a time and in completion
order, to a single consumer callable (usually a backend's write_chunk).
"""

# pylint: disable=too-many-instance-attributes

from concurrent.futures import ThreadPoolExecutor
import logging
from queue import Queue
import threading
import weakref

import psutil

from .compression import CompressedChunk, compress_chunk
from .errors import PipelineClosedError, PipelineError


logging.getLogger(__name__).setLevel(logging.INFO)
def enable_task_queue_debug_logging():
    """ enable task queue debug logging """
    logging.getLogger(__name__).setLevel(logging.DEBUG)

_STOP = object()


def default_thread_count():
    """ number of logical processors, at least 1 """
    return max(1, psutil.cpu_count(logical=True) or 1)


class Task():
    """
    Create a Task object

    :param callable_: callable with no parameters/all required parameters baked in
    (See `functools.partial`)
    :param description: str description used in log records and errors
    """
    def __init__(self, callable_, description):
        self.callable = callable_
        self.description = description
        self.started = False
        self.finished = False
        self.failed = False
        self.result = None
        self.exception = None

    def __repr__(self):
        return ('Task(description=%r, started=%r, finished=%r, failed=%r, exception=%r)'
                % (self.description, self.started, self.finished, self.failed, self.exception))

    def execute_(self):
        """
        actually run the task (blocking) catching any exception, storing it in the task object
        marks the task as started before calling the callable
        marks the task as failed if catching an exception
        marks the task as finished before returning
        """
        self.started = True
        try:
            self.result = self.callable()
        except Exception as exception: # pylint: disable=broad-except
            self.failed = True
            self.exception = exception
        finally:
            self.finished = True
        return self


class CompressionQueue():
    """
    A bounded queue of compression tasks with a coupled ThreadPoolExecutor.

    Every submitted chunk is compressed by exactly one worker; finished chunks reach
    the consumer in completion order, from one thread only. Submission blocks while
    more than 2 x max_workers chunks are in flight (submitted but not yet consumed).
    Intended to be fed from a single producer thread.

    :param consumer: callable receiving each CompressedChunk
    :param compression: CompressionSpec
    :param element_size: int bytes per voxel, the shuffle width
    :param max_workers: int worker threads, defaults to the logical processor count
    """
    def __init__(self, consumer, compression, element_size, max_workers=None):
        logger = logging.getLogger(__name__)
        self.__consumer = consumer
        self.__compression = compression
        self.__element_size = element_size
        self.__max_workers = max_workers or default_thread_count()
        self.__capacity = threading.BoundedSemaphore(2 * self.__max_workers)
        self.__finished_tasks = Queue()
        self.__submitted = 0
        self.__consumed = 0
        self.__failure = None
        self.__closed = False
        self.__executor = ThreadPoolExecutor(max_workers=self.__max_workers,
                                             thread_name_prefix='compress')
        self.__consumer_thread = threading.Thread(target=self.__consume, name='chunk-consumer',
                                                  daemon=True)
        self.__consumer_thread.start()
        self._finalizer = weakref.finalize(self, self.__executor.shutdown, False)
        logger.debug('CompressionQueue.__init__: %r', self)

    def __repr__(self):
        return 'CompressionQueue(compression=%r, max_workers=%r, submitted=%r, consumed=%r)' % (
            self.__compression, self.__max_workers, self.__submitted, self.__consumed)

    @property
    def max_workers(self):
        return self.__max_workers

    def __compress(self, level, index, raw):
        payload, checksum = compress_chunk(raw, self.__compression, self.__element_size)
        return CompressedChunk(level=level, index=index, payload=payload, raw_length=len(raw),
                               checksum=checksum,
                               codec_code=self.__compression.codec_code)

    def __consume(self):
        logger = logging.getLogger(__name__)
        while True:
            task = self.__finished_tasks.get()
            if task is _STOP:
                return
            try:
                if self.__failure is None:
                    if task.failed:
                        raise task.exception
                    self.__consumer(task.result)
                    logger.debug('CompressionQueue.__consume: %r', task.description)
            except Exception as exception: # pylint: disable=broad-except
                logger.error('CompressionQueue.__consume: %s failed: %r',
                             task.description, exception)
                self.__failure = (task.description, exception)
            finally:
                self.__consumed += 1
                self.__capacity.release()

    def __raise_failure(self):
        if self.__failure is not None:
            description, exception = self.__failure
            raise PipelineError(f'{description}: {exception}') from exception

    def submit(self, level, index, raw):
        """
        queue one raw chunk for compression, blocking while the queue is full

        :param level: int resolution level
        :param index: ChunkIndex
        :param raw: bytes the chunk, exactly one internal block
        """
        if self.__closed:
            raise PipelineClosedError('submission after drain')
        self.__raise_failure()
        self.__capacity.acquire()
        task = Task(lambda: self.__compress(level, index, raw),
                    f'chunk level {level} {tuple(index)}')
        self.__submitted += 1
        future = self.__executor.submit(task.execute_)
        future.add_done_callback(lambda _: self.__finished_tasks.put(task))

    def drain(self):
        """
        wait until every submitted chunk reached the consumer, then stop the workers;
        no submissions are accepted afterwards
        """
        logger = logging.getLogger(__name__)
        if self.__closed:
            self.__raise_failure()
            return
        self.__closed = True
        self.__executor.shutdown(wait=True)
        self.__finished_tasks.put(_STOP)
        self.__consumer_thread.join()
        logger.debug('CompressionQueue.drain: %r', self)
        self.__raise_failure()

    def abort(self):
        """
        stop accepting work and release the threads without reporting failures
        """
        if self.__closed:
            return
        self.__closed = True
        self.__failure = self.__failure or ('abort', PipelineClosedError('aborted'))
        self.__executor.shutdown(wait=True)
        self.__finished_tasks.put(_STOP)
        self.__consumer_thread.join()
