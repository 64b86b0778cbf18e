"""Rotation-digest register protection with one-time XOR keys.

A register protects one message: the message is split into W-bit blocks, a
random W-bit *codeword* drives a per-block rotation schedule, and the XOR of
the rotated blocks forms the *message field digest* (MFD). The codeword and
digest together are the 2W-bit signature, masked by XOR with a fresh one-time
key. In encryption mode the rotated blocks themselves are stored and the key
additionally masks them, so the same key material both hides and
authenticates the data.

Schedule: for block i, the low ``r = log2(W)`` bits of the current codeword
state give the block's left rotation and the high r bits give the codeword
state's own right rotation; both are read before the state advances. The
register always carries the original (masked) codeword, so verification can
replay the identical schedule.

Every key is used for exactly one register. Checking a register never
consumes the key; protecting with it does.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

VALID_WIDTHS = (8, 16, 32, 64)

MAX_KEY_ATTEMPTS = 128


class CipherError(Exception):
    """Base class for protection-layer failures."""


class KeyLengthError(CipherError):
    """Key length does not fit the mode and message size."""


class KeyConsumedError(CipherError):
    """A one-time key was offered for a second protection."""


class ExhaustedAttemptsError(CipherError):
    """Key generation failed MAX_KEY_ATTEMPTS times; the rng is suspect."""


class LengthMismatchError(CipherError):
    """Byte sequences of different lengths where equal lengths are required."""


class WidthTooLargeError(CipherError):
    """Exhaustive key enumeration requested above the feasibility bound."""


class ProtectionMode(Enum):
    SIGNATURE = 1
    ENCRYPTION = 2


class CheckReason(Enum):
    OK = "ok"
    DIGEST_MISMATCH = "digest_mismatch"
    PADDING_NONZERO = "padding_nonzero"
    KEY_LENGTH_MISMATCH = "key_length_mismatch"


@dataclass(frozen=True)
class CipherParams:
    """Block geometry shared by all parties of one deployment.

    block_width_bits is W, a power of two in [8, 64]. The rotation fields are
    log2(W) bits wide and the signature (codeword + digest) is 2W bits.
    """

    block_width_bits: int = 64

    def __post_init__(self):
        if self.block_width_bits not in VALID_WIDTHS:
            raise ValueError(
                f"block width must be one of {VALID_WIDTHS}, got {self.block_width_bits}"
            )

    @property
    def rotation_field_bits(self) -> int:
        return self.block_width_bits.bit_length() - 1

    @property
    def signature_width_bits(self) -> int:
        return 2 * self.block_width_bits

    @property
    def block_bytes(self) -> int:
        return self.block_width_bits // 8

    @property
    def word_mask(self) -> int:
        return (1 << self.block_width_bits) - 1


DEFAULT_PARAMS = CipherParams()


@dataclass
class OneTimeKey:
    """Random key bound to exactly one protection.

    Signature keys are 2W bits; encryption keys are padded-data-bits + 2W.
    ``consumed`` flips when the key protects a register and is never reset.
    """

    mode: ProtectionMode
    bits: bytes
    owner: bytes = b""
    consumed: bool = False

    def bit_length(self) -> int:
        return 8 * len(self.bits)


@dataclass(frozen=True)
class Register:
    """One protected record: clear header plus masked signature.

    ``length`` is the plaintext octet count; data_field is zero-padded to a
    whole number of blocks (plaintext when signed, masked rotated blocks when
    encrypted). The mode and length travel in clear; the signature words are
    masked with the one-time key.
    """

    mode: ProtectionMode
    length: int
    data_field: bytes
    masked_cw: int
    masked_mfd: int


@dataclass(frozen=True)
class CheckResult:
    """Outcome of checking a register against a key.

    ``plaintext`` is populated only for a valid encryption-mode check; signed
    registers keep their plaintext in the clear data field.
    """

    valid: bool
    reason: CheckReason
    plaintext: bytes | None = None


def default_rng(seed: int | None = None):
    """System entropy when unseeded, deterministic stream when seeded.

    Production protections need the unseeded profile; the seeded one exists
    for reproducible simulation and tests. Both expose randbytes().
    """
    if seed is None:
        return random.SystemRandom()
    return random.Random(seed)


def padded_octets(length: int, params: CipherParams) -> int:
    """Data-field size for a message of ``length`` octets."""
    bb = params.block_bytes
    return ((length + bb - 1) // bb) * bb


def required_key_octets(mode: ProtectionMode, message_octets: int, params: CipherParams) -> int:
    """Key size demanded by a mode for a message of the given length."""
    signature = params.signature_width_bits // 8
    if mode is ProtectionMode.SIGNATURE:
        return signature
    return padded_octets(message_octets, params) + signature


def rotate_left(f: int, n: int, params: CipherParams) -> int:
    """Circular left rotation of a W-bit word; n is reduced modulo W."""
    w = params.block_width_bits
    n %= w
    return ((f << n) | (f >> (w - n))) & params.word_mask


def rotate_right(f: int, n: int, params: CipherParams) -> int:
    """Circular right rotation of a W-bit word; inverse of rotate_left."""
    w = params.block_width_bits
    n %= w
    return ((f >> n) | (f << (w - n))) & params.word_mask


def split_into_blocks(data: bytes, params: CipherParams) -> list[int]:
    """Pack octets big-endian into W-bit words, zero-padding the tail block."""
    bb = params.block_bytes
    if bb == 1:
        return list(data)
    rem = len(data) % bb
    if rem:
        data = data + b"\x00" * (bb - rem)
    return [int.from_bytes(data[i : i + bb], "big") for i in range(0, len(data), bb)]


def join_blocks(blocks: Iterable[int], params: CipherParams) -> bytes:
    bb = params.block_bytes
    return b"".join(b.to_bytes(bb, "big") for b in blocks)


def compute_mfd(blocks: list[int], cw: int, params: CipherParams) -> int:
    """Digest of a block sequence under the codeword's rotation schedule.

    Folds the blocks left to right: XOR in each block rotated left by the low
    r bits of the codeword state, then rotate the state right by its high r
    bits. The caller's codeword is not modified; an empty sequence digests
    to zero.
    """
    w = params.block_width_bits
    r = params.rotation_field_bits
    mask = params.word_mask
    low = (1 << r) - 1
    top = w - r
    mfd = 0
    c = cw
    for b in blocks:
        l = c & low
        mfd ^= ((b << l) | (b >> (w - l))) & mask
        m = c >> top
        c = ((c >> m) | (c << (w - m))) & mask
    return mfd


def _rotate_blocks(blocks: list[int], cw: int, params: CipherParams) -> tuple[int, list[int]]:
    """One pass producing both the digest and the left-rotated blocks."""
    w = params.block_width_bits
    r = params.rotation_field_bits
    mask = params.word_mask
    low = (1 << r) - 1
    top = w - r
    mfd = 0
    c = cw
    out = []
    for b in blocks:
        l = c & low
        rb = ((b << l) | (b >> (w - l))) & mask
        mfd ^= rb
        out.append(rb)
        m = c >> top
        c = ((c >> m) | (c << (w - m))) & mask
    return mfd, out


def _derotate_blocks(blocks: list[int], cw: int, params: CipherParams) -> list[int]:
    """Invert the per-block rotations by replaying the codeword schedule."""
    w = params.block_width_bits
    r = params.rotation_field_bits
    mask = params.word_mask
    low = (1 << r) - 1
    top = w - r
    c = cw
    out = []
    for b in blocks:
        l = c & low
        out.append(((b >> l) | (b << (w - l))) & mask)
        m = c >> top
        c = ((c >> m) | (c << (w - m))) & mask
    return out


def _xor(a: bytes, b: bytes) -> bytes:
    n = len(a)
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(n, "big")


def protect_register(
    message: bytes, cw: int, key: OneTimeKey, params: CipherParams = DEFAULT_PARAMS
) -> Register:
    """Protect one message with a fresh codeword and one-time key.

    The register's mode is the key's mode. Signature mode stores the padded
    plaintext and masks only the 2W-bit signature; encryption mode stores the
    rotated blocks masked by the leading key octets. Marks the key consumed.

    Raises KeyConsumedError for a reused key and KeyLengthError when the key
    does not fit the mode and message size.
    """
    if key.consumed:
        raise KeyConsumedError("one-time key already applied to a register")
    need = required_key_octets(key.mode, len(message), params)
    if len(key.bits) != need:
        raise KeyLengthError(
            f"{key.mode.name} key for {len(message)} octets needs {need} key octets,"
            f" got {len(key.bits)}"
        )
    if not 0 <= cw <= params.word_mask:
        raise ValueError("codeword out of range for the block width")

    bb = params.block_bytes
    blocks = split_into_blocks(message, params)
    if key.mode is ProtectionMode.SIGNATURE:
        mfd = compute_mfd(blocks, cw, params)
        data_field = message + b"\x00" * (len(blocks) * bb - len(message))
    else:
        mfd, rotated = _rotate_blocks(blocks, cw, params)
        plain = join_blocks(rotated, params)
        data_field = _xor(plain, key.bits[: len(plain)])

    cw_mask = int.from_bytes(key.bits[-2 * bb : -bb], "big")
    mfd_mask = int.from_bytes(key.bits[-bb:], "big")
    key.consumed = True
    return Register(key.mode, len(message), data_field, cw ^ cw_mask, mfd ^ mfd_mask)


def check_register(
    reg: Register, key: OneTimeKey, params: CipherParams = DEFAULT_PARAMS
) -> CheckResult:
    """Authenticate (and for encryption mode, decrypt) a register with a key.

    Compatibility is judged purely by the key's bit length against the
    register's mode and length; any length-compatible bit string is a
    candidate. Never consumes the key.
    """
    need = required_key_octets(reg.mode, reg.length, params)
    if len(key.bits) != need:
        return CheckResult(False, CheckReason.KEY_LENGTH_MISMATCH)

    bb = params.block_bytes
    cw = reg.masked_cw ^ int.from_bytes(key.bits[-2 * bb : -bb], "big")
    claimed = reg.masked_mfd ^ int.from_bytes(key.bits[-bb:], "big")

    if reg.mode is ProtectionMode.SIGNATURE:
        blocks = split_into_blocks(reg.data_field, params)
        if compute_mfd(blocks, cw, params) != claimed:
            return CheckResult(False, CheckReason.DIGEST_MISMATCH)
        return CheckResult(True, CheckReason.OK)

    unmasked = _xor(reg.data_field, key.bits[: len(reg.data_field)])
    candidate = _derotate_blocks(split_into_blocks(unmasked, params), cw, params)
    if compute_mfd(candidate, cw, params) != claimed:
        return CheckResult(False, CheckReason.DIGEST_MISMATCH)
    plain = join_blocks(candidate, params)
    if any(plain[reg.length :]):
        return CheckResult(False, CheckReason.PADDING_NONZERO)
    return CheckResult(True, CheckReason.OK, plain[: reg.length])


def gen_key(
    mode: ProtectionMode,
    message_octets: int,
    data_area,
    host_keystore: Iterable[OneTimeKey],
    rng,
    params: CipherParams = DEFAULT_PARAMS,
    owner: bytes = b"",
) -> OneTimeKey:
    """Draw a one-time key that is provably new for this data area.

    A candidate is rejected if it validates any register already carried by
    the agent (a length-compatible accidental match would blur authorship) or
    if it repeats any key in the host's keystore. ``data_area`` may be an
    AgentDataArea or any iterable of registers.

    Raises ExhaustedAttemptsError after MAX_KEY_ATTEMPTS rejected draws,
    which indicates a broken rng or a pathological data area, not bad luck.
    """
    registers = getattr(data_area, "registers", data_area)
    nbytes = required_key_octets(mode, message_octets, params)
    used = {k.bits for k in host_keystore}
    for _ in range(MAX_KEY_ATTEMPTS):
        bits = rng.randbytes(nbytes)
        if bits in used:
            continue
        candidate = OneTimeKey(mode, bits, owner)
        if any(check_register(reg, candidate, params).valid for reg in registers):
            continue
        return candidate
    raise ExhaustedAttemptsError(
        f"no usable key after {MAX_KEY_ATTEMPTS} draws of {nbytes} octets"
    )


def key_for_ciphertext(ciphertext: bytes, plaintext: bytes) -> bytes:
    """The key that decodes ``ciphertext`` to an arbitrary chosen plaintext.

    XOR masking admits one such key for every equal-length plaintext, which
    is exactly why a captured register constrains nothing.
    """
    if len(ciphertext) != len(plaintext):
        raise LengthMismatchError(
            f"ciphertext ({len(ciphertext)}) and plaintext ({len(plaintext)}) differ"
        )
    return _xor(ciphertext, plaintext)


def enumerate_valid_signature_keys(reg: Register, params: CipherParams = DEFAULT_PARAMS) -> int:
    """Count, by brute force, the signature keys that validate a register.

    Exhausts all 2^(2W) candidate keys, so it is guarded to small widths.
    The expected count is 2^W: each candidate codeword pairs with exactly one
    digest mask, which is what makes the real key indistinguishable.
    """
    if params.block_width_bits > 12:
        raise WidthTooLargeError(
            f"2^{params.signature_width_bits} keys is not enumerable; use width <= 12"
        )
    if reg.mode is not ProtectionMode.SIGNATURE:
        raise ValueError("signature-key enumeration applies to signature-mode registers")
    nbytes = params.signature_width_bits // 8
    probe = OneTimeKey(ProtectionMode.SIGNATURE, b"")  # one object, rebound per candidate
    count = 0
    for k in range(1 << params.signature_width_bits):
        probe.bits = k.to_bytes(nbytes, "big")
        if check_register(reg, probe, params).valid:
            count += 1
    return count
