"""Site data model and integrity primitives for the DAG ledger.

A site is the atomic ledger unit: a knowledge payload (a model parameter
vector, or nothing for pure marker sites), a driving-style feature, an
impact scope, a proof-of-work nonce, weights, an issuer fingerprint and a
signature. All types here are immutable values; operations are pure.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

DIGEST_SIZE = 32
DEFAULT_POW_BITS = 8
MAX_POW_BITS = 32

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_F64 = struct.Struct(">d")

_PAYLOAD_EMPTY = b"\x00"
_PAYLOAD_MODEL = b"\x01"


class SiteError(ValueError):
    """Malformed site field or serialization."""


def default_digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def leading_zero_bits(data: bytes) -> int:
    bits = 0
    for byte in data:
        if byte == 0:
            bits += 8
            continue
        mask = 0x80
        while mask and not byte & mask:
            bits += 1
            mask >>= 1
        break
    return bits


@dataclass(frozen=True)
class DrivingControl:
    """Throttle / steering / braking triple, each in its closed range."""

    throttle: float
    steering: float
    braking: float

    def __post_init__(self):
        if not 0.0 <= self.throttle <= 1.0:
            raise SiteError(f"throttle {self.throttle} outside [0, 1]")
        if not -1.0 <= self.steering <= 1.0:
            raise SiteError(f"steering {self.steering} outside [-1, 1]")
        if not 0.0 <= self.braking <= 1.0:
            raise SiteError(f"braking {self.braking} outside [0, 1]")


@dataclass(frozen=True)
class StyleIndicator:
    """Scalar driving-style summary in [0, 1]."""

    m: float

    def __post_init__(self):
        if not 0.0 <= self.m <= 1.0:
            raise SiteError(f"style indicator {self.m} outside [0, 1]")

    def __float__(self) -> float:
        return float(self.m)


def style_indicator(ctrl: DrivingControl) -> StyleIndicator:
    """Combine throttle, steering and braking into one style scalar.

    Stationary vehicles (zero throttle or full braking with no steering)
    map to 0; flooring the throttle with hard steering maps to 1.
    """
    m = (ctrl.throttle * (1.0 - ctrl.braking) + ctrl.steering**2) / 2.0
    return StyleIndicator(m)


class ModelParams:
    """Fixed-dimension real parameter vector for one shared model.

    Layout is ``d`` data-feature coefficients, one style-feature
    coefficient, and a bias term. Immutable after construction.
    """

    __slots__ = ("theta",)

    def __init__(self, theta):
        arr = np.array(theta, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise SiteError("model parameters must be a non-empty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise SiteError("model parameters must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "theta", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ModelParams is immutable")

    @property
    def dim(self) -> int:
        return int(self.theta.size)

    @classmethod
    def zeros(cls, dim: int) -> "ModelParams":
        return cls(np.zeros(dim))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.theta.shape == other.theta.shape and bool(
            np.all(self.theta == other.theta)
        )

    def __hash__(self):
        return hash(self.theta.tobytes())

    def __repr__(self) -> str:
        return f"ModelParams(dim={self.dim})"


@dataclass(frozen=True)
class IdentityRef:
    """Stable fingerprint of an actor's verification key."""

    fingerprint: bytes

    def __post_init__(self):
        if len(self.fingerprint) != DIGEST_SIZE:
            raise SiteError("identity fingerprint must be 32 bytes")


@dataclass(frozen=True)
class Site:
    """One DAG ledger entry.

    ``digest`` commits to every other field; ``signature`` covers every
    field except itself and the digest; the proof-of-work nonce is checked
    over that same signature-free body. ``weights`` records the own and
    cumulative weight at issuance (the live cumulative weight is ledger
    bookkeeping, not a site field).
    """

    digest: bytes
    payload: ModelParams | None
    scope: int
    feature: StyleIndicator
    pow_nonce: int
    weights: tuple[float, float]
    issuer: IdentityRef
    signature: bytes
    parents: tuple[bytes, ...]

    def __post_init__(self):
        if len(self.digest) != DIGEST_SIZE:
            raise SiteError("site digest must be 32 bytes")
        if self.scope < 0:
            raise SiteError("impact scope must be non-negative")
        if not 0 <= self.pow_nonce < 2**64:
            raise SiteError("pow nonce must fit in 64 bits")
        own, cum = self.weights
        if own not in (0.0, 1.0):
            raise SiteError("own weight must be 0 (marker sites) or 1")
        if cum != own:
            raise SiteError("cumulative weight at issuance must equal own weight")
        if len(self.parents) > 2:
            raise SiteError("a site approves at most two parents")
        for p in self.parents:
            if len(p) != DIGEST_SIZE:
                raise SiteError("parent references must be 32-byte digests")

    @property
    def is_marker(self) -> bool:
        """Zero-weight sites used by the cross-region authentication protocol."""
        return self.weights[0] == 0.0


def _encode_payload(payload: ModelParams | None) -> bytes:
    if payload is None:
        return _PAYLOAD_EMPTY
    return _PAYLOAD_MODEL + payload.theta.astype(">f8").tobytes()


def _decode_payload(data: bytes) -> ModelParams | None:
    if not data:
        raise SiteError("payload field is empty")
    tag, body = data[:1], data[1:]
    if tag == _PAYLOAD_EMPTY:
        if body:
            raise SiteError("marker payload carries trailing bytes")
        return None
    if tag == _PAYLOAD_MODEL:
        if len(body) % 8 != 0 or not body:
            raise SiteError("model payload length is not a multiple of 8")
        return ModelParams(np.frombuffer(body, dtype=">f8").astype(np.float64))
    raise SiteError(f"unknown payload tag {tag!r}")


def _field(data: bytes) -> bytes:
    return _U32.pack(len(data)) + data


def serialize_body(
    payload: ModelParams | None,
    scope: int,
    feature: StyleIndicator,
    pow_nonce: int,
    weights: tuple[float, float],
    issuer: IdentityRef,
    signature: bytes,
    parents: tuple[bytes, ...],
    include_signature: bool = True,
) -> bytes:
    """Length-prefixed encoding of the site fields in declaration order.

    The digest is never part of the body (it is derived from it). Setting
    ``include_signature=False`` yields the byte string that both the
    signature and the proof-of-work commit to.
    """
    parts = [
        _field(_encode_payload(payload)),
        _field(_U32.pack(scope)),
        _field(_F64.pack(float(feature))),
        _field(_U64.pack(pow_nonce)),
        _field(_F64.pack(weights[0]) + _F64.pack(weights[1])),
        _field(issuer.fingerprint),
    ]
    if include_signature:
        parts.append(_field(signature))
    parts.append(_field(b"".join(parents)))
    return b"".join(parts)


def canonical_serialize(site: Site, include_signature: bool = True) -> bytes:
    """Deterministic byte form of a site (digest excluded by construction)."""
    return serialize_body(
        site.payload,
        site.scope,
        site.feature,
        site.pow_nonce,
        site.weights,
        site.issuer,
        site.signature,
        site.parents,
        include_signature=include_signature,
    )


def parse_site(data: bytes, digest_fn=default_digest) -> Site:
    """Inverse of :func:`canonical_serialize`; recomputes the digest."""
    fields = []
    offset = 0
    for _ in range(8):
        if offset + 4 > len(data):
            raise SiteError("truncated site record")
        (length,) = _U32.unpack_from(data, offset)
        offset += 4
        if offset + length > len(data):
            raise SiteError("field length exceeds record")
        fields.append(data[offset : offset + length])
        offset += length
    if offset != len(data):
        raise SiteError("trailing bytes after site record")

    raw_payload, raw_scope, raw_feature, raw_nonce, raw_weights, raw_issuer, raw_sig, raw_parents = fields
    if len(raw_scope) != 4 or len(raw_feature) != 8 or len(raw_nonce) != 8:
        raise SiteError("fixed-width field has wrong length")
    if len(raw_weights) != 16:
        raise SiteError("weights field must hold two floats")
    if len(raw_parents) % DIGEST_SIZE != 0:
        raise SiteError("parents field is not a multiple of the digest size")

    payload = _decode_payload(raw_payload)
    parents = tuple(
        raw_parents[i : i + DIGEST_SIZE] for i in range(0, len(raw_parents), DIGEST_SIZE)
    )
    site = Site(
        digest=digest_fn(data),
        payload=payload,
        scope=_U32.unpack(raw_scope)[0],
        feature=StyleIndicator(_F64.unpack(raw_feature)[0]),
        pow_nonce=_U64.unpack(raw_nonce)[0],
        weights=(_F64.unpack(raw_weights[:8])[0], _F64.unpack(raw_weights[8:])[0]),
        issuer=IdentityRef(raw_issuer),
        signature=raw_sig,
        parents=parents,
    )
    return site


def site_digest(site: Site, digest_fn=default_digest) -> bytes:
    return digest_fn(canonical_serialize(site))


def digest_matches(site: Site, digest_fn=default_digest) -> bool:
    return site.digest == site_digest(site, digest_fn)


class KeyedDigestScheme:
    """Deterministic keyed-digest signature stand-in.

    Verifiers resolve the issuer fingerprint through a key directory, so
    verification of an unregistered issuer fails instead of crashing. Real
    key management is out of scope; the scheme is a pluggable seam.
    """

    def __init__(self, digest_fn=default_digest):
        self._digest = digest_fn
        self._keys: dict[bytes, bytes] = {}

    def new_key(self, rng: np.random.Generator) -> bytes:
        key = rng.bytes(DIGEST_SIZE)
        self.register(key)
        return key

    def register(self, key: bytes) -> bytes:
        fp = self.fingerprint(key)
        self._keys[fp] = key
        return fp

    def fingerprint(self, key: bytes) -> bytes:
        return self._digest(b"key:" + key)

    def sign(self, key: bytes, message: bytes) -> bytes:
        return self._digest(key + message)

    def verify(self, fingerprint: bytes, message: bytes, signature: bytes) -> bool:
        key = self._keys.get(fingerprint)
        if key is None:
            return False
        return self.sign(key, message) == signature


def pow_solve(
    payload: ModelParams | None,
    scope: int,
    feature: StyleIndicator,
    weights: tuple[float, float],
    issuer: IdentityRef,
    parents: tuple[bytes, ...],
    difficulty_bits: int,
    digest_fn=default_digest,
) -> int:
    """Find the smallest nonce whose signature-free body digest clears the target.

    The body is serialized once and only the fixed-offset nonce bytes are
    patched per attempt.
    """
    if not 0 <= difficulty_bits <= MAX_POW_BITS:
        raise SiteError(f"difficulty {difficulty_bits} outside [0, {MAX_POW_BITS}]")
    body = bytearray(
        serialize_body(
            payload, scope, feature, 0, weights, issuer, b"", parents,
            include_signature=False,
        )
    )
    # nonce value sits after payload, scope and feature fields plus its own prefix
    offset = (4 + 1 + (0 if payload is None else 8 * payload.dim)) + 8 + 12 + 4
    nonce = 0
    while True:
        _U64.pack_into(body, offset, nonce)
        if leading_zero_bits(digest_fn(bytes(body))) >= difficulty_bits:
            return nonce
        nonce += 1


def pow_verify(site: Site, difficulty_bits: int, digest_fn=default_digest) -> bool:
    body = canonical_serialize(site, include_signature=False)
    return leading_zero_bits(digest_fn(body)) >= difficulty_bits


def sign_site(site: Site, key: bytes, scheme: KeyedDigestScheme) -> bytes:
    """Signature over the canonical body minus the signature field."""
    return scheme.sign(key, canonical_serialize(site, include_signature=False))


def verify_site(site: Site, scheme: KeyedDigestScheme) -> bool:
    body = canonical_serialize(site, include_signature=False)
    return scheme.verify(site.issuer.fingerprint, body, site.signature)


def build_site(
    payload: ModelParams | None,
    feature: StyleIndicator,
    parents: tuple[bytes, ...],
    key: bytes,
    scheme: KeyedDigestScheme,
    scope: int = 0,
    own_weight: float = 1.0,
    difficulty_bits: int = DEFAULT_POW_BITS,
    digest_fn=default_digest,
) -> Site:
    """Assemble a complete site: solve the proof-of-work, sign, digest."""
    issuer = IdentityRef(scheme.fingerprint(key))
    weights = (own_weight, own_weight)
    nonce = pow_solve(
        payload, scope, feature, weights, issuer, parents, difficulty_bits, digest_fn
    )
    core = serialize_body(
        payload, scope, feature, nonce, weights, issuer, b"", parents,
        include_signature=False,
    )
    signature = scheme.sign(key, core)
    full = serialize_body(
        payload, scope, feature, nonce, weights, issuer, signature, parents
    )
    return Site(
        digest=digest_fn(full),
        payload=payload,
        scope=scope,
        feature=feature,
        pow_nonce=nonce,
        weights=weights,
        issuer=issuer,
        signature=signature,
        parents=parents,
    )
