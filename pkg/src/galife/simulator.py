"""Ground-to-air mmWave channel generator (image method, single bounce).

A ground transmitter illuminates a UAV receiver flying a straight line.  Each
RX position sees the LOS ray, one ground reflection and one specular
reflection per visible box face.  Blocked rays are dropped, the rest are
converted to multipath components and gated by a received-power threshold.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels

SPEED_OF_LIGHT = 299_792_458.0
SCHEMA_VERSION = 1

LOS = "LOS"
GROUND = "GND"

KIND_LOS = "los"
KIND_GROUND = "ground"
KIND_SCATTERER = "scatterer"


class ConfigError(ValueError):
    """Invalid scenario, binning or experiment configuration."""


@dataclass(frozen=True)
class Scatterer:
    """Axis-aligned box; ``extents`` are full edge lengths in meters."""

    center: tuple
    extents: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "extents", tuple(float(v) for v in self.extents))
        if len(self.center) != 3 or len(self.extents) != 3:
            raise ConfigError("scatterer center and extents must be 3-D")
        if min(self.extents) <= 0:
            raise ConfigError(f"scatterer extents must be positive, got {self.extents}")

    @property
    def lower(self):
        return np.subtract(self.center, np.multiply(self.extents, 0.5))

    @property
    def upper(self):
        return np.add(self.center, np.multiply(self.extents, 0.5))

    def faces(self):
        """Yield ``(axis, sign, plane_coordinate)`` for the six faces."""
        lo, hi = self.lower, self.upper
        for axis in range(3):
            yield axis, -1, float(lo[axis])
            yield axis, +1, float(hi[axis])


@dataclass(frozen=True)
class ScenarioConfig:
    carrier_frequency: float = 28e9
    tx_position: tuple = (15.0, 0.0, 10.0)
    trajectory_start: tuple = (0.0, -150.0, 40.0)
    trajectory_end: tuple = (0.0, 150.0, 40.0)
    num_positions: int = 150
    uav_velocity: float = 10.0
    ground_permittivity: float = 3.5
    scatterer_permittivity: float = 5.31
    power_threshold_dbm: float = -175.5
    tx_power_dbm: float = 20.0
    scatterers: tuple = ()
    rng_seed: int = 0
    ground_z: float = 0.0
    cir_resolution: float = 1e-9

    def __post_init__(self):
        for name in ("tx_position", "trajectory_start", "trajectory_end"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "scatterers", tuple(
            s if isinstance(s, Scatterer) else Scatterer(**s) for s in self.scatterers))

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def trajectory_length(self):
        return float(np.linalg.norm(np.subtract(self.trajectory_end, self.trajectory_start)))

    @property
    def spatial_step(self):
        """Spatial step between chain states, trajectory length / N."""
        return self.trajectory_length / self.num_positions

    @property
    def time_step(self):
        return self.trajectory_length / (self.num_positions - 1) / self.uav_velocity

    def validate(self):
        if int(self.num_positions) != self.num_positions or self.num_positions < 2:
            raise ConfigError(f"num_positions must be an integer >= 2, got {self.num_positions}")
        if not self.carrier_frequency > 0:
            raise ConfigError("carrier_frequency must be positive")
        if not self.trajectory_length > 0:
            raise ConfigError("trajectory start and end coincide")
        if not self.uav_velocity > 0:
            raise ConfigError("uav_velocity must be positive")
        if not (self.ground_permittivity > 1 and self.scatterer_permittivity > 1):
            raise ConfigError("relative permittivities must exceed 1")
        if not self.cir_resolution > 0:
            raise ConfigError("cir_resolution must be positive")
        if self.tx_position[2] <= self.ground_z:
            raise ConfigError("transmitter must be above the ground plane")
        _check_one_side(self)
        return self

    def to_dict(self):
        d = asdict(self)
        d["scatterers"] = [asdict(s) for s in self.scatterers]
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)


def _check_one_side(config):
    a = np.asarray(config.trajectory_start[:2])
    b = np.asarray(config.trajectory_end[:2])
    u = b - a
    if np.hypot(*u) < 1e-12 or not config.scatterers:
        return
    signs = set()
    for s in config.scatterers:
        lo, hi = s.lower, s.upper
        for x in (lo[0], hi[0]):
            for y in (lo[1], hi[1]):
                cross = u[0] * (y - a[1]) - u[1] * (x - a[0])
                if abs(cross) < 1e-9:
                    raise ConfigError("scatterer footprint touches the trajectory line")
                signs.add(cross > 0)
    if len(signs) > 1:
        raise ConfigError("scatterers must all lie on one side of the trajectory")


@dataclass(frozen=True)
class GeometricRay:
    kind: str
    path_id: str
    length: float
    theta_t: float
    phi_t: float
    theta_r: float
    phi_r: float
    tx: tuple
    rx: tuple
    points: tuple = ()
    gamma: complex = 1.0 + 0.0j
    grazing_angle: Optional[float] = None
    blocked: bool = False


@dataclass(frozen=True, slots=True)
class MpcRecord:
    """One detected multipath component at one RX position."""

    alpha: float
    power_dbm: float
    tau: float
    theta_t: float
    phi_t: float
    theta_r: float
    phi_r: float
    phase: float
    rx_index: int
    true_ray_id: str = ""

    def params(self):
        return (self.alpha, self.tau, self.theta_t, self.phi_t, self.theta_r, self.phi_r)


@dataclass(frozen=True)
class ChannelSnapshot:
    rx_index: int
    mpcs: tuple = ()

    def __len__(self):
        return len(self.mpcs)


@dataclass(frozen=True)
class ChannelDataset:
    snapshots: tuple
    config: Optional[ScenarioConfig] = None
    seed: Optional[int] = None
    replicate: Optional[int] = None

    def __post_init__(self):
        idx = [s.rx_index for s in self.snapshots]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("snapshots must be strictly ordered by rx_index")

    @property
    def num_positions(self):
        return len(self.snapshots)

    def records(self):
        for snap in self.snapshots:
            yield from snap.mpcs


# ---------------------------------------------------------------------------
# geometry and propagation primitives
# ---------------------------------------------------------------------------


def build_rx_positions(config):
    """N equally spaced RX points from trajectory start to end (inclusive)."""
    n = config.num_positions
    if int(n) != n or n < 2:
        raise ConfigError(f"num_positions must be an integer >= 2, got {n}")
    start = np.asarray(config.trajectory_start, dtype=float)
    end = np.asarray(config.trajectory_end, dtype=float)
    if np.linalg.norm(end - start) <= 0:
        raise ConfigError("trajectory start and end coincide")
    return start + np.linspace(0.0, 1.0, int(n))[:, None] * (end - start)


def direction_angles(vec):
    """(elevation from the horizontal plane, azimuth in [0, 2pi)) of a vector."""
    x, y, z = vec
    elev = math.atan2(z, math.hypot(x, y))
    azim = math.atan2(y, x) % (2 * math.pi)
    if azim >= 2 * math.pi:
        azim = 0.0
    return elev, azim


def fresnel_reflection(eps_r, grazing_angle, polarization="vertical"):
    """Fresnel reflection coefficient of a lossless dielectric half-space.

    ``grazing_angle`` is measured from the surface, so pi/2 is normal
    incidence.  "vertical" is the parallel (TM) branch, "horizontal" the
    perpendicular (TE) one.
    """
    if not grazing_angle > 0 or grazing_angle > math.pi / 2 + 1e-12:
        raise ValueError(f"grazing angle must lie in (0, pi/2], got {grazing_angle}")
    if not eps_r >= 1:
        raise ValueError(f"relative permittivity must be >= 1, got {eps_r}")
    s = math.sin(grazing_angle)
    root = np.sqrt(complex(eps_r - math.cos(grazing_angle) ** 2))
    if polarization == "vertical":
        return complex((eps_r * s - root) / (eps_r * s + root))
    if polarization == "horizontal":
        return complex((s - root) / (s + root))
    raise ValueError(f"unknown polarization {polarization!r}")


def antenna_gain(elevation):
    """Vertical-dipole donut: cos^2 of the elevation, 1 at the horizon."""
    return float(np.clip(math.cos(elevation) ** 2, 0.0, 1.0))


def free_space_path_loss_db(distance, wavelength):
    return 20.0 * math.log10(4.0 * math.pi * distance / wavelength)


def _ray(kind, path_id, tx, rx, points, gamma=1.0 + 0j, grazing=None):
    pts = [np.asarray(p, dtype=float) for p in points]
    first = pts[0] if pts else rx
    last = pts[-1] if pts else tx
    chain = [tx, *pts, rx]
    length = float(sum(np.linalg.norm(b - a) for a, b in zip(chain, chain[1:])))
    th_t, ph_t = direction_angles(first - tx)
    th_r, ph_r = direction_angles(last - rx)
    return GeometricRay(
        kind=kind, path_id=path_id, length=length,
        theta_t=th_t, phi_t=ph_t, theta_r=th_r, phi_r=ph_r,
        tx=tuple(tx), rx=tuple(rx), points=tuple(tuple(p) for p in pts),
        gamma=complex(gamma), grazing_angle=grazing)


def face_id(box_index, axis, sign):
    return f"S{box_index}{'xyz'[axis]}{'+' if sign > 0 else '-'}"


def trace_rays(tx, rx, scene):
    """LOS, ground bounce and single-bounce box-face rays between two points.

    Every ray is returned with a ``blocked`` flag; the LOS ray is always in
    the list.
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if np.allclose(tx, rx):
        raise ValueError("transmitter and receiver coincide")
    rays = [_ray(KIND_LOS, LOS, tx, rx, [])]
    legs = [[(tx, rx)]]

    g = scene.ground_z
    if tx[2] > g and rx[2] > g:
        image = tx.copy()
        image[2] = 2 * g - tx[2]
        t = (g - image[2]) / (rx[2] - image[2])
        p = image + t * (rx - image)
        grazing = math.asin(min(1.0, (tx[2] - g) / np.linalg.norm(p - tx)))
        gamma = fresnel_reflection(scene.ground_permittivity, grazing, "vertical")
        rays.append(_ray(KIND_GROUND, GROUND, tx, rx, [p], gamma, grazing))
        legs.append([(tx, p), (p, rx)])

    for b, box in enumerate(scene.scatterers):
        lo, hi = box.lower, box.upper
        for axis, sign, plane in box.faces():
            if sign * (tx[axis] - plane) <= 0 or sign * (rx[axis] - plane) <= 0:
                continue
            image = tx.copy()
            image[axis] = 2 * plane - tx[axis]
            t = (plane - image[axis]) / (rx[axis] - image[axis])
            p = image + t * (rx - image)
            p[axis] = plane
            others = [a for a in range(3) if a != axis]
            if any(p[a] < lo[a] - 1e-9 or p[a] > hi[a] + 1e-9 for a in others):
                continue
            d_in = p - tx
            sin_g = abs(d_in[axis]) / np.linalg.norm(d_in)
            grazing = math.asin(min(1.0, sin_g))
            if grazing <= 0:
                continue
            # vertical E-field: TE on walls, TM on roofs
            pol = "vertical" if axis == 2 else "horizontal"
            gamma = fresnel_reflection(scene.scatterer_permittivity, grazing, pol)
            rays.append(_ray(KIND_SCATTERER, face_id(b, axis, sign), tx, rx, [p], gamma, grazing))
            legs.append([(tx, p), (p, rx)])

    if scene.scatterers:
        starts = np.array([s for ray_legs in legs for s, _ in ray_legs])
        ends = np.array([e for ray_legs in legs for _, e in ray_legs])
        bmin = np.array([s.lower for s in scene.scatterers])
        bmax = np.array([s.upper for s in scene.scatterers])
        hits = kernels.segment_box_hits(starts, ends, bmin, bmax, 1e-9)
        out, k = [], 0
        for ray, ray_legs in zip(rays, legs):
            blocked = bool(hits[k:k + len(ray_legs)].any())
            k += len(ray_legs)
            out.append(replace(ray, blocked=blocked) if blocked else ray)
        rays = out
    return rays


def ray_to_mpc(ray, config, n):
    """Assemble amplitude, power, delay, angles and phase for one ray."""
    lam = config.wavelength
    d = ray.length
    d0 = float(np.linalg.norm(np.subtract(ray.rx, ray.tx)))
    gain = antenna_gain(ray.theta_t) * antenna_gain(ray.theta_r)
    alpha = abs(ray.gamma) * lam / (4.0 * math.pi * d) * math.sqrt(gain)
    power = config.tx_power_dbm + 20.0 * math.log10(alpha) if alpha > 0 else -math.inf
    phase = (2.0 * math.pi * (d - d0) / lam) % (2.0 * math.pi)
    if phase >= 2 * math.pi:
        phase = 0.0
    return MpcRecord(
        alpha=alpha, power_dbm=power, tau=d / SPEED_OF_LIGHT,
        theta_t=ray.theta_t, phi_t=ray.phi_t, theta_r=ray.theta_r, phi_r=ray.phi_r,
        phase=phase, rx_index=int(n), true_ray_id=ray.path_id)


def apply_power_threshold(snapshot, threshold_dbm):
    kept = tuple(m for m in snapshot.mpcs if m.power_dbm > threshold_dbm)
    return ChannelSnapshot(snapshot.rx_index, kept)


def assemble_cir(snapshot, resolution=1e-9, num_taps=None):
    """Render the snapshot onto a uniform delay grid starting at 0 s.

    Each component lands on its nearest tap as ``alpha * exp(-j phase)``.
    Components sharing a tap add coherently, so the rendered energy equals
    the sum of ``alpha**2`` only when no two delays share a tap.
    """
    if not resolution > 0:
        raise ValueError("delay resolution must be positive")
    taps = [int(round(m.tau / resolution)) for m in snapshot.mpcs]
    if num_taps is None:
        num_taps = max(taps) + 1 if taps else 1
    cir = np.zeros(num_taps, dtype=complex)
    for k, m in zip(taps, snapshot.mpcs):
        if k < num_taps:
            cir[k] += m.alpha * np.exp(-1j * m.phase)
    return cir


def snapshot_at(config, rx, n):
    rays = trace_rays(config.tx_position, rx, config)
    mpcs = tuple(ray_to_mpc(r, config, n) for r in rays if not r.blocked)
    return apply_power_threshold(ChannelSnapshot(int(n), mpcs), config.power_threshold_dbm)


def simulate(config):
    """Thresholded snapshot at every RX position (rx_index starts at 1)."""
    config.validate()
    positions = build_rx_positions(config)
    snaps = tuple(snapshot_at(config, rx, n) for n, rx in enumerate(positions, start=1))
    return ChannelDataset(snaps, config=config, seed=config.rng_seed)
