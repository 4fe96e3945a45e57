"""Multi-region topology and the fast cross-region identity protocol.

A vehicle entering a neighbor region receives two zero-weight sites: a
carrier site holding the knowledge it brings (signed by the origin
region's roadside units) and an identity anchor (signed by the destination
region's units). Its first site in the new region must approve exactly
those two; afterwards it issues ordinary sites. Authentication state is
fully derivable from the ledger, so the protocol needs no extra storage.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .ledger import AppendResult, AppendStatus, Ledger, TipSelection, select_tips, verify_and_append
from .learning import Dataset
from .sites import (
    IdentityRef,
    KeyedDigestScheme,
    ModelParams,
    Site,
    StyleIndicator,
    build_site,
    verify_site,
)


class RegionError(ValueError):
    """Topology or protocol violation (non-neighbor crossing, bad state...)."""


class AuthPhase(enum.Enum):
    UNAUTHENTICATED = "unauthenticated"
    PENDING = "pending"
    AUTHENTICATED = "authenticated"


@dataclass(frozen=True)
class AuthState:
    phase: AuthPhase
    anchor: bytes | None = None
    carrier: bytes | None = None


@dataclass
class Region:
    """One traffic region: its ledger, signing key and present vehicles."""

    region_id: str
    ledger: Ledger
    rsu_key: bytes
    rsu_ref: IdentityRef
    neighbors: dict[str, int] = field(default_factory=dict)
    vehicles: dict[str, None] = field(default_factory=dict)


def delivery_decision(scope: int, threshold: int) -> bool:
    """Carry knowledge across the border only when its impact scope reaches
    the configured threshold (boundary inclusive)."""
    return scope >= threshold


class RegionNetwork:
    """Regions, adjacency, vehicle keys and per-(vehicle, region) auth state."""

    def __init__(self, scheme: KeyedDigestScheme | None = None, pow_bits: int = 0):
        self.scheme = scheme or KeyedDigestScheme()
        self.pow_bits = pow_bits
        self.regions: dict[str, Region] = {}
        self.rsu_region: dict[bytes, str] = {}
        self.vehicle_keys: dict[str, bytes] = {}
        self.vehicle_region: dict[str, str] = {}
        self.auth: dict[tuple[str, str], AuthState] = {}

    def add_region(self, region_id: str, rng: np.random.Generator) -> Region:
        if region_id in self.regions:
            raise RegionError(f"region {region_id!r} already exists")
        key = self.scheme.new_key(rng)
        region = Region(
            region_id=region_id,
            ledger=Ledger(),
            rsu_key=key,
            rsu_ref=IdentityRef(self.scheme.fingerprint(key)),
        )
        self.regions[region_id] = region
        self.rsu_region[region.rsu_ref.fingerprint] = region_id
        return region

    def connect(self, a: str, b: str, scope_threshold: int = 1) -> None:
        self.region(a).neighbors[b] = scope_threshold
        self.region(b).neighbors[a] = scope_threshold

    def region(self, region_id: str) -> Region:
        try:
            return self.regions[region_id]
        except KeyError:
            raise RegionError(f"unknown region {region_id!r}") from None

    def register_vehicle(
        self, vehicle_id: str, home: str, rng: np.random.Generator
    ) -> bytes:
        """A vehicle is authenticated in its home region from the start."""
        if vehicle_id in self.vehicle_keys:
            raise RegionError(f"vehicle {vehicle_id!r} already registered")
        key = self.scheme.new_key(rng)
        self.vehicle_keys[vehicle_id] = key
        self.vehicle_region[vehicle_id] = home
        self.region(home).vehicles[vehicle_id] = None
        self.auth[(vehicle_id, home)] = AuthState(AuthPhase.AUTHENTICATED)
        return key

    def auth_state(self, vehicle_id: str, region_id: str) -> AuthState:
        return self.auth.get((vehicle_id, region_id), AuthState(AuthPhase.UNAUTHENTICATED))

    def add_genesis(
        self, region_id: str, styles, payload: ModelParams | None = None
    ) -> list[bytes]:
        region = self.region(region_id)
        digests = []
        for style in styles:
            site = build_site(
                payload=payload,
                feature=StyleIndicator(float(style)),
                parents=(),
                key=region.rsu_key,
                scheme=self.scheme,
                difficulty_bits=self.pow_bits,
            )
            region.ledger.append(site)
            digests.append(site.digest)
        return digests

    def initiate_crossing(
        self,
        vehicle_id: str,
        origin: str,
        destination: str,
        knowledge: ModelParams | None,
        scope: int,
        style: StyleIndicator,
    ) -> tuple[Site, Site]:
        """Issue the zero-weight carrier/anchor pair in the destination ledger.

        Knowledge below the scope threshold still crosses as an empty
        carrier so the two-parent approval contract holds. The vehicle's
        presence moves and its state in the destination becomes pending.
        """
        origin_region = self.region(origin)
        dest_region = self.region(destination)
        if origin == destination:
            raise RegionError("crossing requires two distinct regions")
        if vehicle_id not in origin_region.vehicles:
            raise RegionError(f"vehicle {vehicle_id!r} is not present in {origin!r}")
        if destination not in origin_region.neighbors:
            raise RegionError(f"{destination!r} is not a neighbor of {origin!r}")
        threshold = origin_region.neighbors[destination]
        carried = knowledge if delivery_decision(scope, threshold) else None
        carrier = build_site(
            payload=carried,
            feature=style,
            parents=(),
            key=origin_region.rsu_key,
            scheme=self.scheme,
            scope=scope,
            own_weight=0.0,
            difficulty_bits=self.pow_bits,
        )
        anchor = build_site(
            payload=None,
            feature=style,
            parents=(),
            key=dest_region.rsu_key,
            scheme=self.scheme,
            own_weight=0.0,
            difficulty_bits=self.pow_bits,
        )
        dest_region.ledger.append(carrier)
        dest_region.ledger.append(anchor)
        del origin_region.vehicles[vehicle_id]
        dest_region.vehicles[vehicle_id] = None
        self.vehicle_region[vehicle_id] = destination
        self.auth[(vehicle_id, destination)] = AuthState(
            AuthPhase.PENDING, anchor=anchor.digest, carrier=carrier.digest
        )
        return carrier, anchor

    def first_site_in_new_region(
        self,
        vehicle_id: str,
        region_id: str,
        payload: ModelParams | None,
        style: StyleIndicator,
        scope: int = 0,
    ) -> tuple[AppendResult, Site | None]:
        """Append the authenticating site, whose parents are forced to the
        pending anchor/carrier pair; the tip-selection law is bypassed for
        this one site."""
        state = self.auth_state(vehicle_id, region_id)
        if state.phase is not AuthPhase.PENDING:
            return (
                AppendResult(AppendStatus.REJECTED_STRUCTURE, "vehicle has no pending crossing"),
                None,
            )
        region = self.region(region_id)
        site = build_site(
            payload=payload,
            feature=style,
            parents=(state.anchor, state.carrier),
            key=self.vehicle_keys[vehicle_id],
            scheme=self.scheme,
            scope=scope,
            difficulty_bits=self.pow_bits,
        )
        result = verify_and_append(
            region.ledger,
            site,
            TipSelection(state.anchor, state.carrier),
            verifier_testset=None,
            epsilon=float("inf"),
            scheme=self.scheme,
            difficulty_bits=self.pow_bits,
        )
        if result.ok:
            self.auth[(vehicle_id, region_id)] = AuthState(AuthPhase.AUTHENTICATED)
            return result, site
        return result, None

    def issue_site(
        self,
        vehicle_id: str,
        region_id: str,
        payload: ModelParams | None,
        style: StyleIndicator,
        rng: np.random.Generator,
        alpha: float = 0.0,
        beta: float = 0.0,
        verifier_testset: Dataset | None = None,
        epsilon: float = float("inf"),
        scope: int = 0,
    ) -> tuple[AppendResult, Site | None]:
        """Ordinary issuance path; requires prior authentication in the region."""
        state = self.auth_state(vehicle_id, region_id)
        if state.phase is not AuthPhase.AUTHENTICATED:
            return (
                AppendResult(
                    AppendStatus.REJECTED_STRUCTURE,
                    "vehicle is not authenticated in this region",
                ),
                None,
            )
        region = self.region(region_id)
        selection = select_tips(region.ledger, float(style), rng, alpha, beta)
        site = build_site(
            payload=payload,
            feature=style,
            parents=selection.digests(),
            key=self.vehicle_keys[vehicle_id],
            scheme=self.scheme,
            scope=scope,
            difficulty_bits=self.pow_bits,
        )
        result = verify_and_append(
            region.ledger, site, selection, verifier_testset, epsilon,
            self.scheme, self.pow_bits,
        )
        return result, site if result.ok else None

    def _entry_site(self, vehicle_fp: bytes, region: Region) -> Site | None:
        """The vehicle's authenticating site in a region, if it has one."""
        for site in region.ledger.sites.values():
            if site.issuer.fingerprint != vehicle_fp or len(site.parents) != 2:
                continue
            parents = [region.ledger.sites[p] for p in site.parents]
            if all(p.is_marker for p in parents):
                return site
        return None

    def trace_origin(self, vehicle_id: str) -> list[str]:
        """Walk the approved carrier chain back through every crossing.

        Returns the regions the vehicle came from, most recent first,
        ending at its original home; a vehicle that never crossed reports
        its current region. Carrier sites whose signature does not resolve
        to a known roadside-unit key abort the trace.
        """
        if vehicle_id not in self.vehicle_keys:
            raise RegionError(f"unknown vehicle {vehicle_id!r}")
        fp = self.scheme.fingerprint(self.vehicle_keys[vehicle_id])
        current = self.vehicle_region[vehicle_id]
        chain: list[str] = []
        visited = {current}
        while True:
            region = self.region(current)
            entry = self._entry_site(fp, region)
            if entry is None:
                break
            carrier = None
            for parent_digest in entry.parents:
                parent = region.ledger.sites[parent_digest]
                if parent.issuer.fingerprint != region.rsu_ref.fingerprint:
                    carrier = parent
                    break
            if carrier is None:
                raise RegionError("entry site has no foreign-signed carrier parent")
            if not verify_site(carrier, self.scheme):
                raise RegionError("carrier site signature does not verify")
            origin = self.rsu_region.get(carrier.issuer.fingerprint)
            if origin is None:
                raise RegionError("carrier site is not signed by any known region")
            chain.append(origin)
            if origin in visited:
                break
            visited.add(origin)
            current = origin
        return chain or [self.vehicle_region[vehicle_id]]


def network_from_config(regions_cfg: dict, rng: np.random.Generator,
                        pow_bits: int = 0) -> RegionNetwork:
    """Build the region topology described by a scenario config block.

    Expects ``{"ids": [...], "adjacency": [[a, b, scope_threshold], ...]}``.
    """
    net = RegionNetwork(pow_bits=pow_bits)
    for rid in regions_cfg["ids"]:
        net.add_region(rid, rng)
    for a, b, threshold in regions_cfg.get("adjacency", []):
        net.connect(a, b, threshold)
    return net


def replay_auth(ledger: Ledger, rsu_fingerprints: set[bytes]) -> dict[bytes, AuthPhase]:
    """Reconstruct per-vehicle authentication state from ledger contents alone.

    An authenticated vehicle is visible as a site approving two marker
    sites. Pending crossings exist in the ledger only as unapproved marker
    pairs, which carry no vehicle identity (they are roadside-unit signed),
    so they are deliberately absent from the result.
    """
    states: dict[bytes, AuthPhase] = {}
    markers = {d for d, s in ledger.sites.items() if s.is_marker}
    for site in ledger.sites.values():
        if site.issuer.fingerprint in rsu_fingerprints or not site.parents:
            continue
        parent_set = set(site.parents)
        if parent_set and parent_set <= markers and len(site.parents) == 2:
            states[site.issuer.fingerprint] = AuthPhase.AUTHENTICATED
    return states
