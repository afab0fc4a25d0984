"""Key material: the sparse LDPC pair, the stream-cipher secret and ECDSA keys.

Also holds the user watermark database and the binary key file format.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from ecdsa import BadSignatureError, SECP112r1, SigningKey, VerifyingKey
from ecdsa.util import sigdecode_string, sigencode_string

from . import gf2

__all__ = [
    "PrcParams",
    "WatermarkKeySet",
    "KeyGenError",
    "KeyFileError",
    "KeyVersionError",
    "keygen",
    "keygen_signature",
    "sign_user_info",
    "verify_user_info",
    "save_keys",
    "load_keys",
    "UserDatabase",
    "DuplicateUserError",
    "UserNotFoundError",
    "db_assign",
    "db_lookup",
    "SIGNATURE_BITS",
    "USER_INFO_BITS",
]

CURVE = SECP112r1
SIGNATURE_BITS = 224
USER_INFO_BITS = 32

KEY_MAGIC = b"LMKY"
KEY_VERSION = 1


class KeyGenError(ValueError):
    pass


class KeyFileError(ValueError):
    """Malformed key file; ``field`` names what could not be parsed."""

    def __init__(self, field, detail="truncated"):
        super().__init__(f"key file: cannot parse field {field!r} ({detail})")
        self.field = field


class KeyVersionError(KeyFileError):
    def __init__(self, detail):
        ValueError.__init__(self, f"key file version error: {detail}")
        self.field = "magic"


@dataclass(frozen=True)
class PrcParams:
    """Shape of the LDPC pseudorandom code.

    n : codeword length, g : seed length, t : ones per parity check,
    r : number of parity checks, eta : Bernoulli noise rate of the encoder.
    """

    n: int
    g: int = 32
    t: int = 3
    r: int | None = None
    eta: float = 0.05

    def __post_init__(self):
        if self.r is None:
            object.__setattr__(self, "r", self.n - self.g)
        if self.g < 1:
            raise ValueError("g must be >= 1")
        if not 1 <= self.t <= self.n:
            raise ValueError("t must lie in [1, n]")
        if self.r < 0:
            raise ValueError("r must be non-negative")
        if not 0.0 <= self.eta < 0.5:
            raise ValueError("eta must lie in [0, 0.5)")

    @classmethod
    def for_shape(cls, shape, **kw):
        ch, h, w = shape
        if (ch * h * w) % 2:
            raise ValueError("latent must have an even number of elements")
        return cls(n=ch * h * w // 2, **kw)


@dataclass(frozen=True, eq=False)
class WatermarkKeySet:
    """Everything secret or public about one watermarking deployment.

    ``parity`` holds the r x t column indices of the parity-check matrix,
    ``generator`` the dense n x g generator with ``parity . generator = 0``.
    """

    params: PrcParams
    parity: np.ndarray
    generator: np.ndarray
    sk_c: np.ndarray
    signing_key: SigningKey | None = field(default=None, repr=False)
    verifying_key: VerifyingKey | None = field(default=None, repr=False)

    @property
    def n_sk(self):
        return int(self.sk_c.size)

    @property
    def has_signature_keys(self):
        return self.verifying_key is not None

    @cached_property
    def generator_ints(self):
        """Rows of G as Python ints (bit k = column k); used by OSD."""
        return [int.from_bytes(np.packbits(row, bitorder="little").tobytes(), "little")
                for row in self.generator]

    def parity_dense(self):
        dense = np.zeros((self.params.r, self.params.n), dtype=np.uint8)
        np.put_along_axis(dense, self.parity.astype(np.intp), 1, axis=1)
        return dense

    def __eq__(self, other):
        if not isinstance(other, WatermarkKeySet):
            return NotImplemented
        return (
            self.params == other.params
            and np.array_equal(self.parity, other.parity)
            and np.array_equal(self.generator, other.generator)
            and np.array_equal(self.sk_c, other.sk_c)
            and _sk_bytes(self.signing_key) == _sk_bytes(other.signing_key)
            and _vk_bytes(self.verifying_key) == _vk_bytes(other.verifying_key)
        )

    __hash__ = None


def _sk_bytes(sk):
    return None if sk is None else sk.to_string()


def _vk_bytes(vk):
    return None if vk is None else vk.to_string()


def _sample_parity(params, rng):
    """Staircase t-sparse parity checks, then a random column relabelling.

    Row i touches one column that no earlier row has touched plus t-1 columns
    drawn from those already available, so P always has full row rank r and
    its kernel has dimension exactly n - r.
    """
    n, t, r = params.n, params.t, params.r
    free = n - r
    if t - 1 > free:
        raise KeyGenError(f"t={t} needs at least {t - 1} columns outside the checks, have {free}")
    rows = np.empty((r, t), dtype=np.int64)
    for i in range(r):
        pool = free + i
        rows[i, : t - 1] = rng.choice(pool, t - 1, replace=False)
        rows[i, t - 1] = pool
    relabel = rng.permutation(n)
    return np.sort(relabel[rows], axis=1).astype(np.int32)


def keygen(params, n_sk=256, rng_seed=0, signature=False):
    """Sample a complete key set; deterministic in ``rng_seed``.

    Raises
    ------
    KeyGenError
        If ``r > n - g`` or the kernel of P has dimension below g.
    """
    if params.r > params.n - params.g:
        raise KeyGenError(
            f"null space too small: r={params.r} > n-g={params.n - params.g}"
        )
    rng = np.random.default_rng(rng_seed)
    parity = _sample_parity(params, rng)
    kernel = gf2.nullspace(gf2.sparse_to_packed(parity, params.n), params.n)
    dim = kernel.shape[1]
    if dim < params.g:
        raise KeyGenError(f"null space too small: dim {dim} < g={params.g}")
    if dim == params.g:
        generator = kernel
    else:
        # a random g-dimensional subspace of the kernel
        for _ in range(64):
            mix = rng.integers(0, 2, size=(dim, params.g), dtype=np.uint8)
            if gf2.rank(gf2.pack_rows(mix.T), dim) == params.g:
                break
        else:
            raise KeyGenError("could not draw a full-rank kernel mixing matrix")
        generator = gf2.matmul(kernel, mix)
    if gf2.rank(gf2.pack_rows(generator.T), params.n) != params.g:
        raise KeyGenError("generator is rank deficient; retry with another seed")
    sk_c = rng.integers(0, 2, size=n_sk, dtype=np.uint8)
    sk = vk = None
    if signature:
        sk, vk = keygen_signature(int(rng.integers(0, 2**63)))
    return WatermarkKeySet(params, parity, generator.astype(np.uint8), sk_c, sk, vk)


def keygen_signature(seed=None):
    """ECDSA pair on secp112r1, whose (r, s) pair packs into 224 bits.

    With ``seed`` the secret exponent is derived by hashing, so tests can
    reproduce a key pair.
    """
    if seed is None:
        sk = SigningKey.generate(curve=CURVE, hashfunc=hashlib.sha256)
    else:
        digest = hashlib.sha256(b"latentmark-ecdsa" + int(seed).to_bytes(8, "little", signed=False)).digest()
        secexp = int.from_bytes(digest, "big") % (CURVE.order - 1) + 1
        sk = SigningKey.from_secret_exponent(secexp, curve=CURVE, hashfunc=hashlib.sha256)
    return sk, sk.get_verifying_key()


def _info_bytes(user_info):
    return int(user_info).to_bytes(USER_INFO_BITS // 8, "big")


def sign_user_info(signing_key, user_info):
    """Deterministic (RFC 6979) signature of a 32-bit user id, as 224 bits."""
    sig = signing_key.sign_deterministic(
        _info_bytes(user_info), hashfunc=hashlib.sha256, sigencode=sigencode_string
    )
    return np.unpackbits(np.frombuffer(sig, dtype=np.uint8))


def verify_user_info(verifying_key, user_info, signature_bits):
    sig = np.packbits(np.asarray(signature_bits, dtype=np.uint8)).tobytes()
    try:
        return bool(verifying_key.verify(sig, _info_bytes(user_info),
                                         hashfunc=hashlib.sha256, sigdecode=sigdecode_string))
    except (BadSignatureError, AssertionError, ValueError):
        return False


# -- key file ---------------------------------------------------------------
#
# magic "LMKY" | version u8 | n g t r n_sk u32 | eta f64
# | sk_c bytes | parity r*t u32 | generator n*ceil(g/8) bytes
# | has_sig u8 [| sk 14 bytes | vk 28 bytes]


def save_keys(ks, path):
    p = ks.params
    out = bytearray(KEY_MAGIC)
    out += struct.pack("<B5Id", KEY_VERSION, p.n, p.g, p.t, p.r, ks.n_sk, p.eta)
    out += np.packbits(ks.sk_c, bitorder="little").tobytes()
    out += ks.parity.astype("<u4").tobytes()
    out += np.packbits(ks.generator, axis=1, bitorder="little").tobytes()
    if ks.signing_key is not None or ks.verifying_key is not None:
        out += b"\x01"
        out += ks.signing_key.to_string() if ks.signing_key is not None else bytes(CURVE.baselen)
        out += ks.verifying_key.to_string()
    else:
        out += b"\x00"
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, size, field):
        if self.pos + size > len(self.data):
            raise KeyFileError(field)
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk


def load_keys(path):
    rd = _Reader(Path(path).read_bytes())
    magic = rd.take(4, "magic")
    if magic != KEY_MAGIC:
        raise KeyVersionError(f"bad magic {magic!r}")
    (version,) = struct.unpack("<B", rd.take(1, "version"))
    if version != KEY_VERSION:
        raise KeyVersionError(f"unsupported version {version}")
    n, g, t, r, n_sk, eta = struct.unpack("<5Id", rd.take(28, "header"))
    try:
        params = PrcParams(n=n, g=g, t=t, r=r, eta=eta)
    except ValueError as exc:
        raise KeyFileError("header", str(exc)) from None
    sk_c = np.unpackbits(np.frombuffer(rd.take((n_sk + 7) // 8, "sk_c"), dtype=np.uint8),
                         count=n_sk, bitorder="little")
    parity = np.frombuffer(rd.take(4 * r * t, "parity"), dtype="<u4").reshape(r, t)
    if parity.size and parity.max() >= n:
        raise KeyFileError("parity", "column index out of range")
    gbytes = (g + 7) // 8
    generator = np.unpackbits(
        np.frombuffer(rd.take(n * gbytes, "generator"), dtype=np.uint8).reshape(n, gbytes),
        axis=1, count=g, bitorder="little",
    )
    (has_sig,) = rd.take(1, "has_sig")
    sk = vk = None
    if has_sig:
        raw_sk = rd.take(CURVE.baselen, "signing_key")
        raw_vk = rd.take(2 * CURVE.baselen, "verifying_key")
        try:
            if any(raw_sk):
                sk = SigningKey.from_string(raw_sk, curve=CURVE, hashfunc=hashlib.sha256)
            vk = VerifyingKey.from_string(raw_vk, curve=CURVE, hashfunc=hashlib.sha256)
        except Exception as exc:  # ecdsa raises several unrelated types
            raise KeyFileError("signature_keys", str(exc)) from None
    if rd.pos != len(rd.data):
        raise KeyFileError("trailer", "unexpected trailing bytes")
    return WatermarkKeySet(params, parity.astype(np.int32), generator.astype(np.uint8),
                           sk_c.astype(np.uint8), sk, vk)


# -- user database ----------------------------------------------------------


class DuplicateUserError(ValueError):
    pass


class UserNotFoundError(KeyError):
    pass


class UserDatabase:
    """Map of 32-bit user ids to their 32-bit user info (and signature).

    Stored on disk as lines ``user_id,hex_user_info[,hex_signature]``.
    """

    def __init__(self):
        self.records = {}
        self._matrix_cache = None

    def __len__(self):
        return len(self.records)

    def __contains__(self, user_id):
        return user_id in self.records

    def assign(self, user_id, user_info, signature=None):
        user_id = int(user_id)
        if not 0 <= user_id < 2**32:
            raise ValueError("user_id must be a 32-bit unsigned integer")
        if not 0 <= int(user_info) < 2**USER_INFO_BITS:
            raise ValueError("user_info must fit in 32 bits")
        if user_id in self.records:
            raise DuplicateUserError(f"user {user_id} already assigned")
        if signature is not None:
            signature = np.asarray(signature, dtype=np.uint8)
            if signature.size != SIGNATURE_BITS:
                raise ValueError("signature must be 224 bits")
        self.records[user_id] = (int(user_info), signature)
        self._matrix_cache = None
        return self

    def lookup(self, user_id):
        try:
            return self.records[int(user_id)][0]
        except KeyError:
            raise UserNotFoundError(user_id) from None

    def signature(self, user_id):
        try:
            return self.records[int(user_id)][1]
        except KeyError:
            raise UserNotFoundError(user_id) from None

    def user_ids(self):
        return np.fromiter(sorted(self.records), dtype=np.int64, count=len(self.records))

    def enroll(self, user_id, user_info, signing_key=None):
        """Assign a user, signing the info when a signing key is given."""
        sig = None if signing_key is None else sign_user_info(signing_key, user_info)
        return self.assign(user_id, user_info, sig)

    def watermark_matrix(self, q, mode="operator"):
        """(ids ascending, N x q bit matrix) of every user's watermark."""
        ids = self.user_ids()
        infos = np.array([self.records[i][0] for i in ids], dtype=np.uint64)
        shifts = np.arange(USER_INFO_BITS - 1, -1, -1, dtype=np.uint64)
        info_bits = ((infos[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
        if mode == "operator":
            if q % USER_INFO_BITS:
                raise ValueError(f"q={q} is not a multiple of {USER_INFO_BITS}")
            return ids, np.tile(info_bits, (1, q // USER_INFO_BITS))
        if q != USER_INFO_BITS + SIGNATURE_BITS:
            raise ValueError(f"third-party watermarks are 256 bits, q={q}")
        sigs = []
        for i in ids:
            sig = self.records[i][1]
            if sig is None:
                raise ValueError(f"user {i} has no stored signature")
            sigs.append(sig)
        return ids, np.concatenate([info_bits, np.stack(sigs)], axis=1)

    def packed_watermarks(self, q, mode="operator"):
        """Like :meth:`watermark_matrix` but rows packed into uint64 words; cached."""
        key = (q, mode)
        if self._matrix_cache is None or self._matrix_cache[0] != key:
            ids, mat = self.watermark_matrix(q, mode)
            self._matrix_cache = (key, ids, pack_bits64(mat))
        return self._matrix_cache[1], self._matrix_cache[2]

    def save(self, path):
        lines = []
        for uid in sorted(self.records):
            info, sig = self.records[uid]
            line = f"{uid},{info:08x}"
            if sig is not None:
                line += "," + np.packbits(sig).tobytes().hex()
            lines.append(line)
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def load(cls, path):
        db = cls()
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected user_id,hex_user_info[,hex_signature]")
            try:
                uid = int(parts[0])
                info = int(parts[1], 16)
                sig = None
                if len(parts) == 3:
                    sig = np.unpackbits(np.frombuffer(bytes.fromhex(parts[2]), dtype=np.uint8))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            db.assign(uid, info, sig)
        return db


def pack_bits64(mat):
    """Pack rows of a bit matrix into big-endian-bit uint64 words (zero padded)."""
    mat = np.atleast_2d(np.asarray(mat, dtype=np.uint8))
    words = (mat.shape[1] + 63) // 64
    padded = np.zeros((mat.shape[0], words * 64), dtype=np.uint8)
    padded[:, : mat.shape[1]] = mat
    return np.packbits(padded, axis=1).view(np.uint64)


def db_assign(db, user_id, user_info, signature=None):
    return db.assign(user_id, user_info, signature)


def db_lookup(db, user_id):
    return db.lookup(user_id)
