"""
Chunk codec: optional byte shuffle followed by Gzip (RFC 1952 member) or an LZ4 frame,
with a CRC32C checksum over the stored payload.

compress_chunk, decompress_chunk, shuffle and unshuffle are pure and reentrant;
zlib, lz4 and numpy release the GIL while they work, so they scale across threads.
"""

from dataclasses import dataclass
from enum import IntEnum
import logging
from typing import NamedTuple
from zlib import DEFLATED, compressobj, decompressobj, error as ZlibError

from crc32c import crc32c
import lz4.frame
import numpy

from .errors import ChecksumMismatchError, CorruptChunkError, LayoutError
from .types import ChunkIndex


logging.getLogger(__name__).setLevel(logging.INFO)
def enable_compression_debug_logging():
    """ enable compression debug logging """
    logging.getLogger(__name__).setLevel(logging.DEBUG)

# window bits selecting a gzip header and trailer
GZIP_WBITS = 31

SHUFFLE_FLAG = 256

DEFAULT_GZIP_LEVEL = 2


class Algorithm(IntEnum):
    """
    Compression algorithms. The integer value is the container's codec code.
    """
    NONE = 0
    GZIP = 1
    LZ4 = 2


@dataclass(frozen=True)
class CompressionSpec:
    """
    Codec choice for every chunk of a file.

    :param algorithm: Algorithm
    :param level: int gzip level 1..9, ignored by the other algorithms
    :param shuffle: bool transpose bytes into byte planes before encoding
    """
    algorithm: Algorithm = Algorithm.GZIP
    level: int = DEFAULT_GZIP_LEVEL
    shuffle: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'algorithm', Algorithm(self.algorithm))
        if self.algorithm is Algorithm.GZIP and not 1 <= self.level <= 9:
            raise LayoutError(f'gzip level must be in 1..9, got {self.level!r}')

    @property
    def codec_code(self):
        """ algorithm code with the shuffle flag or-ed on """
        return int(self.algorithm) | (SHUFFLE_FLAG if self.shuffle else 0)

    @classmethod
    def from_codec_code(cls, code):
        """
        spec able to decode chunks stored with the given codec code;
        the gzip level is not recorded and not needed for decoding
        """
        try:
            algorithm = Algorithm(code & ~SHUFFLE_FLAG)
        except ValueError:
            raise CorruptChunkError(f'unknown codec code {code}')
        return cls(algorithm=algorithm, shuffle=bool(code & SHUFFLE_FLAG))

    @classmethod
    def parse(cls, text, shuffle=False):
        """
        parse 'none', 'gzip', 'gzip:N', 'lz4', optionally prefixed with 'shuffle+'

        :param text: str
        :param shuffle: bool default shuffle when the text has no prefix
        """
        text = str(text).strip().lower()
        if text.startswith('shuffle+'):
            shuffle = True
            text = text[len('shuffle+'):]
        name, _, level = text.partition(':')
        if name == 'none' and not level:
            return cls(Algorithm.NONE, shuffle=shuffle)
        if name == 'lz4' and not level:
            return cls(Algorithm.LZ4, shuffle=shuffle)
        if name == 'gzip':
            try:
                return cls(Algorithm.GZIP, int(level) if level else DEFAULT_GZIP_LEVEL, shuffle)
            except ValueError as error:
                if isinstance(error, LayoutError):
                    raise
        raise LayoutError(f'unknown compression {text!r}, expected none, gzip:N or lz4')

    @property
    def label(self):
        name = {Algorithm.NONE: 'none', Algorithm.GZIP: f'gzip:{self.level}',
                Algorithm.LZ4: 'lz4'}[self.algorithm]
        return f'shuffle+{name}' if self.shuffle else name


class CompressedChunk(NamedTuple):
    """
    One encoded chunk ready for a backend.
    """
    level: int
    index: ChunkIndex
    payload: bytes
    raw_length: int
    checksum: int
    codec_code: int


def shuffle(data, element_size):
    """
    byte-plane transposition: output[b * n + i] = input[i * element_size + b]

    :param data: bytes-like
    :param element_size: int bytes per element
    :return: bytes
    """
    raw = numpy.frombuffer(memoryview(data).cast('B'), dtype=numpy.uint8)
    if element_size < 1 or raw.size % element_size:
        raise LayoutError(f'shuffle: {raw.size} bytes is not divisible by {element_size}')
    if element_size == 1:
        return raw.tobytes()
    return raw.reshape(-1, element_size).T.tobytes()


def unshuffle(data, element_size):
    """
    inverse of shuffle
    """
    raw = numpy.frombuffer(memoryview(data).cast('B'), dtype=numpy.uint8)
    if element_size < 1 or raw.size % element_size:
        raise LayoutError(f'unshuffle: {raw.size} bytes is not divisible by {element_size}')
    if element_size == 1:
        return raw.tobytes()
    return raw.reshape(element_size, -1).T.tobytes()


def _gzip_encode(data, level):
    encoder = compressobj(level, DEFLATED, GZIP_WBITS)
    return encoder.compress(data) + encoder.flush()


def _gzip_decode(payload):
    decoder = decompressobj(GZIP_WBITS)
    try:
        raw = decoder.decompress(payload) + decoder.flush()
    except ZlibError as error:
        raise CorruptChunkError(f'gzip stream: {error}') from error
    if not decoder.eof:
        raise CorruptChunkError('gzip stream ends early')
    if decoder.unused_data:
        raise CorruptChunkError(f'{len(decoder.unused_data)} bytes after the gzip member')
    return raw


def _lz4_decode(payload):
    try:
        return lz4.frame.decompress(payload)
    except (RuntimeError, ValueError) as error:
        raise CorruptChunkError(f'lz4 frame: {error}') from error


def compress_chunk(raw, spec, element_size):
    """
    encode one chunk

    :param raw: bytes-like chunk of one internal block
    :param spec: CompressionSpec
    :param element_size: int bytes per voxel, the shuffle width
    :return: (bytes payload, int crc32c of payload)
    """
    data = shuffle(raw, element_size) if spec.shuffle else bytes(raw)
    if spec.algorithm is Algorithm.GZIP:
        payload = _gzip_encode(data, spec.level)
    elif spec.algorithm is Algorithm.LZ4:
        payload = lz4.frame.compress(data, store_size=True)
    else:
        payload = data
    return payload, crc32c(payload)


def decompress_chunk(payload, spec, raw_length, element_size, checksum=None):
    """
    exact inverse of compress_chunk

    :param payload: bytes as stored
    :param spec: CompressionSpec used for encoding (the level does not matter)
    :param raw_length: int expected decoded length
    :param element_size: int bytes per voxel
    :param checksum: int expected crc32c of payload, not verified when None
    :return: bytes
    """
    logger = logging.getLogger(__name__)
    if checksum is not None:
        actual = crc32c(payload)
        if actual != checksum:
            logger.debug('decompress_chunk: checksum: expected %r, got %r', checksum, actual)
            raise ChecksumMismatchError(f'chunk checksum {actual:#010x} does not match the '
                                        f'recorded {checksum:#010x}')
    if spec.algorithm is Algorithm.GZIP:
        data = _gzip_decode(payload)
    elif spec.algorithm is Algorithm.LZ4:
        data = _lz4_decode(payload)
    else:
        data = bytes(payload)
    if len(data) != raw_length:
        raise CorruptChunkError(f'decoded {len(data)} bytes, expected {raw_length}')
    return unshuffle(data, element_size) if spec.shuffle else data
