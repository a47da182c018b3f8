"""MSB-first bit packing and order-0 Exp-Golomb codes."""

import numpy as np

from .errors import CorruptStreamError


class BitWriter:
    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nacc = 0

    @property
    def bit_length(self):
        return 8 * len(self._buf) + self._nacc

    def write_bits(self, value, nbits):
        if nbits < 0 or value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self._acc = (self._acc << nbits) | value
        self._nacc += nbits
        while self._nacc >= 8:
            self._nacc -= 8
            self._buf.append((self._acc >> self._nacc) & 0xFF)
        self._acc &= (1 << self._nacc) - 1

    def write_bit(self, bit):
        self.write_bits(bit, 1)

    def getvalue(self):
        """Bytes of the stream, final byte zero-padded."""
        out = bytearray(self._buf)
        if self._nacc:
            out.append((self._acc << (8 - self._nacc)) & 0xFF)
        return bytes(out)


class BitReader:
    def __init__(self, data):
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        self._pos = 0

    @property
    def bits_read(self):
        return self._pos

    def read_bit(self):
        if self._pos >= self._bits.shape[0]:
            raise CorruptStreamError("bitstream exhausted")
        bit = int(self._bits[self._pos])
        self._pos += 1
        return bit

    def read_bits(self, nbits):
        end = self._pos + nbits
        if end > self._bits.shape[0]:
            raise CorruptStreamError("bitstream exhausted")
        value = 0
        for b in self._bits[self._pos:end]:
            value = (value << 1) | int(b)
        self._pos = end
        return value


def exp_golomb_encode(writer, value):
    """Order-0 Exp-Golomb: unary length prefix, then value+1 in binary."""
    if value < 0:
        raise ValueError("exp-golomb encodes nonnegative integers")
    nbits = (value + 1).bit_length()
    writer.write_bits(0, nbits - 1)
    writer.write_bits(value + 1, nbits)


def exp_golomb_decode(reader):
    zeros = 0
    while reader.read_bit() == 0:
        zeros += 1
        if zeros > 63:
            raise CorruptStreamError("malformed exp-golomb prefix")
    return ((1 << zeros) | reader.read_bits(zeros)) - 1 if zeros else 0


def signed_to_unsigned(levels):
    """Map signed levels for exp-golomb: v <= 0 -> -2v, v > 0 -> 2v-1."""
    lv = np.asarray(levels, dtype=np.int64)
    return np.where(lv <= 0, -2 * lv, 2 * lv - 1)


def unsigned_to_signed(value):
    return -(value // 2) if value % 2 == 0 else (value + 1) // 2


def exp_golomb_total_bits(unsigned_values):
    """Summed code length for a batch of nonnegative mapped values."""
    v = np.asarray(unsigned_values, dtype=np.int64) + 1
    # frexp exponent == bit_length, exact for values < 2**53
    nbits = np.frexp(v.astype(np.float64))[1]
    return int(np.sum(2 * nbits - 1))
