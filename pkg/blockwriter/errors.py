"""
Exceptions raised by the writer, the codec, the container and the reader.
"""


class BlockWriterError(Exception):
    """
    base class for representing any error raised deliberately by blockwriter
    """


class LayoutError(BlockWriterError, ValueError):
    """
    class for representing invalid sizes, sequences, extents, data types or parameters
    """


class BlockIndexError(BlockWriterError, IndexError):
    """
    class for representing an input block index outside of the block grid
    """


class DuplicateBlockError(BlockWriterError):
    """
    class for representing an input block that was copied twice
    """


class WriterFinishedError(BlockWriterError):
    """
    class for representing a call on a writer that was already finished or closed
    """


class MissingBlocksError(BlockWriterError):
    """
    class for representing a finish call before all input blocks arrived

    :param missing_count: int number of input blocks never copied
    """
    def __init__(self, missing_count):
        super().__init__(f'{missing_count} input blocks were never copied')
        self.missing_count = missing_count


class CodecError(BlockWriterError):
    """
    base class for representing errors while encoding or decoding a chunk
    """


class CorruptChunkError(CodecError):
    """
    class for representing a chunk payload that cannot be decoded
    """


class ChecksumMismatchError(CodecError):
    """
    class for representing a chunk payload whose checksum does not match its index entry
    """


class PipelineError(BlockWriterError):
    """
    class for representing a failure inside a compression worker or the chunk consumer
    """


class PipelineClosedError(PipelineError):
    """
    class for representing a submission to a pipeline that was already drained
    """


class ContainerError(BlockWriterError):
    """
    base class for representing errors of a backend writer
    """


class DuplicateChunkError(ContainerError):
    """
    class for representing a chunk written twice to the same backend
    """


class MissingChunksError(ContainerError):
    """
    class for representing a finalize call before every chunk was written

    :param missing: [(level, ChunkIndex)] the chunks that were never written
    """
    def __init__(self, missing):
        preview = ', '.join(f'{level}:{tuple(index)}' for level, index in missing[:8])
        more = ', ...' if len(missing) > 8 else ''
        super().__init__(f'{len(missing)} chunks missing: {preview}{more}')
        self.missing = missing


class ContainerFormatError(ContainerError):
    """
    base class for representing a file that is not a readable container
    """


class BadMagicError(ContainerFormatError):
    """
    class for representing a file that does not start with the container magic
    """


class TruncatedFileError(ContainerFormatError):
    """
    class for representing a file that ends early or was never finalized
    """


class VersionMismatchError(ContainerFormatError):
    """
    class for representing a container written in an unsupported format version
    """


class RegionError(BlockWriterError, ValueError):
    """
    class for representing a region, level, channel or timepoint outside of an image
    """


class VerificationError(BlockWriterError):
    """
    class for representing a difference between a container and its input

    :param message: str what differs
    :param coordinate: tuple first differing position, if known
    """
    def __init__(self, message, coordinate=None):
        super().__init__(message if coordinate is None else f'{message} at {coordinate}')
        self.coordinate = coordinate
