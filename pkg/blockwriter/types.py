"""
This module provides the shared vocabulary of the writer:
axis labels, data types, 5D sizes and indices, dimension sequences,
the physical image extent and the immutable image layout.

All values are immutable after construction and safe to share between threads.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Tuple

import numpy

from .errors import LayoutError


class Dimension(IntEnum):
    """
    The five axis labels. The integer value is the position of the axis in every
    5D tuple of this package (X, Y, Z, C, T).
    """
    X = 0
    Y = 1
    Z = 2
    C = 3
    T = 4


_NUMPY_TYPES = {
    1: numpy.dtype('<u1'),
    2: numpy.dtype('<u2'),
    3: numpy.dtype('<u4'),
    4: numpy.dtype('<f4'),
}

_LABELS = {1: 'u8', 2: 'u16', 3: 'u32', 4: 'f32'}


class DataType(IntEnum):
    """
    Voxel data types. The integer value is the container's data type code.
    """
    U8 = 1
    U16 = 2
    U32 = 3
    F32 = 4

    @property
    def numpy_dtype(self):
        """ little-endian numpy dtype of one voxel """
        return _NUMPY_TYPES[self.value]

    @property
    def bytes_per_element(self):
        """ 1, 2, 4 or 4 """
        return self.numpy_dtype.itemsize

    @property
    def label(self):
        """ short name as used on the command line """
        return _LABELS[self.value]

    @property
    def is_integer(self):
        return self is not DataType.F32

    @property
    def display_range(self):
        """ default display range for channel color records """
        if self is DataType.F32:
            return (0.0, 1.0)
        return (0.0, float(numpy.iinfo(self.numpy_dtype).max))

    @classmethod
    def parse(cls, text):
        """
        :param text: str one of u8, u16, u32, f32
        :return: DataType
        """
        for code, label in _LABELS.items():
            if label == str(text).strip().lower():
                return cls(code)
        raise LayoutError(f'unknown data type {text!r}, expected one of {list(_LABELS.values())}')


class _Vector5D(tuple):
    """ a tuple of five integers addressable by Dimension """

    _minimum = 0

    def __new__(cls, x, y, z, c, t):
        values = []
        for dimension, value in zip(Dimension, (x, y, z, c, t)):
            try:
                integer = int(value)
            except (TypeError, ValueError):
                raise LayoutError(f'{cls.__name__}: {dimension.name} is not an integer: {value!r}')
            if integer != value or integer < cls._minimum:
                raise LayoutError(f'{cls.__name__}: {dimension.name} must be an integer '
                                  f'>= {cls._minimum}, got {value!r}')
            values.append(integer)
        return super().__new__(cls, values)

    @classmethod
    def of(cls, values):
        """
        :param values: iterable of five integers in X, Y, Z, C, T order
        """
        values = tuple(values)
        if len(values) != 5:
            raise LayoutError(f'{cls.__name__} needs 5 components, got {len(values)}')
        return cls(*values)

    @classmethod
    def parse(cls, text):
        """
        parse a comma separated list such as '2048,2048,100,3,1'
        """
        try:
            return cls.of(int(part) for part in str(text).split(','))
        except ValueError as error:
            if isinstance(error, LayoutError):
                raise
            raise LayoutError(f'{cls.__name__}: cannot parse {text!r}')

    def __repr__(self):
        return '%s(%s)' % (self.__class__.__name__,
                           ', '.join(f'{d.name}={v}' for d, v in zip(Dimension, self)))

    x = property(lambda self: self[0])
    y = property(lambda self: self[1])
    z = property(lambda self: self[2])
    c = property(lambda self: self[3])
    t = property(lambda self: self[4])

    @property
    def xyz(self):
        return tuple(self[:3])


class Size5D(_Vector5D):
    """
    Per-dimension count: voxels for X/Y/Z, channels for C and timepoints for T.
    Every component is at least 1.
    """
    _minimum = 1

    def product(self):
        """ total number of elements """
        result = 1
        for value in self:
            result *= value
        return result


class BlockIndex5D(_Vector5D):
    """
    Per-dimension block index of one input block.
    """
    _minimum = 0


class DimensionSequence5D(tuple):
    """
    Memory order of an input block: a permutation of X, Y, Z, C, T with the
    fastest varying axis first.
    """
    def __new__(cls, *dimensions):
        if len(dimensions) == 1 and not isinstance(dimensions[0], (Dimension, int)):
            dimensions = tuple(dimensions[0])
        try:
            dimensions = tuple(Dimension(d) if isinstance(d, int) else Dimension[str(d).upper()]
                               for d in dimensions)
        except (KeyError, ValueError):
            raise LayoutError(f'DimensionSequence5D: unknown axis in {dimensions!r}')
        if sorted(dimensions) != list(Dimension):
            raise LayoutError(f'DimensionSequence5D: {dimensions!r} is not a permutation of XYZCT')
        return super().__new__(cls, dimensions)

    @classmethod
    def parse(cls, text):
        """
        :param text: str such as 'XYZCT' or 'Y,X,Z,C,T'
        """
        letters = [letter for letter in str(text) if letter not in ', ']
        return cls(letters)

    def __str__(self):
        return ''.join(d.name for d in self)

    def __repr__(self):
        return f'DimensionSequence5D({str(self)!r})'


XYZCT = DimensionSequence5D('XYZCT')


class ChunkIndex(NamedTuple):
    """
    Address of one internal XYZ chunk inside a resolution level.
    """
    t: int
    c: int
    bz: int
    by: int
    bx: int


@dataclass(frozen=True)
class ImageExtent:
    """
    Physical position of the beginning of the first voxel (min) and the end of the last
    voxel (max) along X, Y and Z, micrometers by convention.
    """
    min_x: float
    min_y: float
    min_z: float
    max_x: float
    max_y: float
    max_z: float

    def __post_init__(self):
        for axis in 'xyz':
            low, high = getattr(self, f'min_{axis}'), getattr(self, f'max_{axis}')
            if not high > low:
                raise LayoutError(f'ImageExtent: max_{axis} ({high}) must exceed '
                                  f'min_{axis} ({low})')

    @classmethod
    def of(cls, values):
        """
        :param values: six reals (min_x, min_y, min_z, max_x, max_y, max_z)
        """
        try:
            values = tuple(float(v) for v in values)
        except (TypeError, ValueError):
            raise LayoutError(f'ImageExtent needs six numbers, got {values!r}')
        if len(values) != 6:
            raise LayoutError(f'ImageExtent needs 6 values, got {len(values)}')
        return cls(*values)

    @classmethod
    def for_voxels(cls, image_size):
        """ extent with unit voxel size starting at the origin """
        return cls(0.0, 0.0, 0.0, float(image_size.x), float(image_size.y), float(image_size.z))

    def as_tuple(self):
        return (self.min_x, self.min_y, self.min_z, self.max_x, self.max_y, self.max_z)


DEFAULT_INTERNAL_BLOCK_SIZE = (256, 256, 8)


@dataclass(frozen=True)
class ImageLayout:
    """
    The immutable description of an image: its 5D size, data type, the geometry and
    memory order of the blocks the caller streams, and the XYZ geometry of the
    internal chunks the writer stores.
    """
    image_size: Size5D
    data_type: DataType
    input_block_size: Size5D
    input_sequence: DimensionSequence5D = XYZCT
    internal_block_size: Tuple[int, int, int] = field(default=DEFAULT_INTERNAL_BLOCK_SIZE)

    def __post_init__(self):
        object.__setattr__(self, 'image_size', Size5D.of(self.image_size))
        object.__setattr__(self, 'input_block_size', Size5D.of(self.input_block_size))
        object.__setattr__(self, 'input_sequence', DimensionSequence5D(self.input_sequence))
        if not isinstance(self.data_type, DataType):
            object.__setattr__(self, 'data_type', DataType.parse(self.data_type))
        internal = tuple(self.internal_block_size)
        if len(internal) != 3 or any(int(v) != v or v < 1 for v in internal):
            raise LayoutError(f'ImageLayout: internal_block_size must be 3 positive integers, '
                              f'got {self.internal_block_size!r}')
        object.__setattr__(self, 'internal_block_size', tuple(int(v) for v in internal))

    @property
    def internal_block_voxels(self):
        block_x, block_y, block_z = self.internal_block_size
        return block_x * block_y * block_z

    @property
    def internal_block_bytes(self):
        """ byte size of one stored chunk before compression """
        return self.internal_block_voxels * self.data_type.bytes_per_element

    @property
    def input_block_voxels(self):
        return self.input_block_size.product()

    @property
    def input_block_bytes(self):
        return self.input_block_voxels * self.data_type.bytes_per_element

    @property
    def image_bytes(self):
        return self.image_size.product() * self.data_type.bytes_per_element


@dataclass(frozen=True)
class ChannelColorInfo:
    """
    Display information of one channel: RGBA color in [0, 1] and a display range.
    """
    color: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    display_range: Tuple[float, float] = (0.0, 65535.0)

    def __post_init__(self):
        if len(self.color) != 4 or any(not 0.0 <= float(v) <= 1.0 for v in self.color):
            raise LayoutError(f'ChannelColorInfo: color must be 4 values in [0, 1], '
                              f'got {self.color!r}')
        if len(self.display_range) != 2:
            raise LayoutError(f'ChannelColorInfo: display_range must be (min, max), '
                              f'got {self.display_range!r}')
        object.__setattr__(self, 'color', tuple(float(v) for v in self.color))
        object.__setattr__(self, 'display_range', tuple(float(v) for v in self.display_range))


@dataclass(frozen=True)
class TimePointInfo:
    """
    Acquisition timestamp of one timepoint, free text.
    """
    timestamp: str = ''
