"""Deterministic workload generation: seeded key-value transaction streams
(uniform or Zipfian key choice) and analytical plan rotations.

Every stream is derived from (seed, purpose, client) strings fed to Python's
Mersenne generator, so the same config always produces byte-identical action
sequences regardless of host or process.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


class ZipfSampler:
    """Bounded Zipf(n, theta) sampling by rejection inversion.

    Draws ranks in 1..n with P(k) proportional to k^-theta. This is the
    standard rejection-inversion scheme (flat-top envelope over the
    decreasing density), which works for any theta > 0 including theta < 1
    where the unbounded inversion methods do not apply.
    """

    def __init__(self, n: int, theta: float, rng: random.Random):
        if n < 1:
            raise ValueError("n must be >= 1")
        if theta <= 0:
            raise ValueError("theta must be > 0")
        self.n = n
        self.theta = theta
        self.rng = rng
        self._h_x1 = self._h_integral(1.5) - 1.0
        self._h_n = self._h_integral(n + 0.5)
        self._s = 2.0 - self._h_integral_inverse(
            self._h_integral(2.5) - self._h(2.0))

    def sample(self) -> int:
        while True:
            u = self._h_n + self.rng.random() * (self._h_x1 - self._h_n)
            x = self._h_integral_inverse(u)
            k = int(x + 0.5)
            if k < 1:
                k = 1
            elif k > self.n:
                k = self.n
            if (k - x <= self._s
                    or u >= self._h_integral(k + 0.5) - self._h(k)):
                return k

    def _h(self, x: float) -> float:
        return math.exp(-self.theta * math.log(x))

    def _h_integral(self, x: float) -> float:
        logx = math.log(x)
        return _expm1_over_x((1.0 - self.theta) * logx) * logx

    def _h_integral_inverse(self, x: float) -> float:
        t = x * (1.0 - self.theta)
        if t < -1.0:
            t = -1.0
        return math.exp(_log1p_over_x(t) * x)


def _log1p_over_x(x: float) -> float:
    if abs(x) > 1e-8:
        return math.log1p(x) / x
    return 1.0 - x / 2.0 + x * x / 3.0


def _expm1_over_x(x: float) -> float:
    if abs(x) > 1e-8:
        return math.expm1(x) / x
    return 1.0 + x / 2.0 * (1.0 + x / 3.0 * (1.0 + x / 4.0))


def zipf_mass(n: int, theta: float) -> list[float]:
    """Exact normalized Zipf probabilities for ranks 1..n (test oracle)."""
    weights = [k ** -theta for k in range(1, n + 1)]
    total = sum(weights)
    return [w / total for w in weights]


@dataclass(frozen=True)
class TxnSpec:
    """One transaction to execute: kind decides the op pattern.

    read_only        -> read each key
    read_modify_write-> read then overwrite each key
    insert           -> overwrite each key (upsert; may create the row)
    """
    kind: str
    keys: tuple[int, ...]
    values: tuple[tuple, ...] | None  # one value tuple per key when writing


@dataclass(frozen=True)
class Action:
    """One item of the inspectable workload stream."""
    client: int
    txn: TxnSpec


_TABLE_CACHE: dict = {}


class WorkloadGenerator:
    """Derives per-client transaction and query streams from one config."""

    def __init__(self, config):
        self.config = config
        mix = (config.txn_mix_read_only, config.txn_mix_rmw,
               config.txn_mix_insert)
        if any(f < 0 for f in mix) or abs(sum(mix) - 1.0) > 1e-9:
            raise ConfigError(
                f"txn mix fractions must be non-negative and sum to 1, "
                f"got {mix}")
        if config.key_distribution not in ("uniform", "zipfian"):
            raise ConfigError(
                f"key_distribution must be uniform or zipfian, "
                f"got {config.key_distribution!r}")
        # inserts may target a small band of unseen keys beyond the load
        self.insert_key_bound = max(
            config.table_rows, int(config.table_rows * 1.05))

    def _rng(self, purpose: str, client: int = 0) -> random.Random:
        return random.Random(f"{self.config.seed}/{purpose}/{client}")

    def _row_values(self, rng: random.Random) -> tuple:
        cfg = self.config
        values = []
        for name, ctype in cfg.schema.value_columns:
            if ctype == "float64":
                # dyadic grid (multiples of 2^-30): float sums of up to 2^23
                # such values are exact in any association order, so chunked
                # aggregation and row-wise oracles agree bit-for-bit
                values.append(math.ldexp(rng.getrandbits(30), -30))
            elif ctype == "int64":
                values.append(rng.randrange(cfg.n_groups))
            else:
                width = int(ctype.split(":", 1)[1])
                values.append(b"\x00" * width)
        return tuple(values)

    def initial_table(self):
        """Column-wise initial table image: (sorted keys, name -> array).

        Generated with a seeded PCG64 stream per column so large tables build
        in vectorized time; cached per workload identity since loads dominate
        experiment-suite setup cost.
        """
        cfg = self.config
        ident = (cfg.seed, cfg.table_rows, cfg.columns, cfg.n_groups)
        cached = _TABLE_CACHE.get(ident)
        if cached is not None:
            return cached
        n = cfg.table_rows
        keys = np.arange(n, dtype=np.int64)
        columns = {}
        for ci, (name, ctype) in enumerate(cfg.schema.value_columns):
            rng = np.random.default_rng([cfg.seed & 0x7FFFFFFF, 0xB0, ci])
            if ctype == "float64":
                # dyadic grid, see _row_values
                columns[name] = (rng.integers(0, 1 << 30, n, dtype=np.int64)
                                 .astype(np.float64) * 2.0 ** -30)
            elif ctype == "int64":
                columns[name] = rng.integers(0, cfg.n_groups, n, dtype=np.int64)
            else:
                width = int(ctype.split(":", 1)[1])
                columns[name] = np.zeros(n, dtype=f"S{width}")
        _TABLE_CACHE[ident] = (keys, columns)
        while len(_TABLE_CACHE) > 4:
            _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
        return keys, columns

    def initial_rows(self) -> dict[int, tuple]:
        """Row-shaped view of the initial image, for replay oracles."""
        keys, columns = self.initial_table()
        schema = self.config.schema
        widths = {name: int(ctype.split(":", 1)[1])
                  for name, ctype in schema.value_columns
                  if ctype.startswith("bytes:")}
        out = {}
        names = [name for name, _ in schema.value_columns]
        lists = []
        for name in names:
            arr = columns[name]
            vals = arr.tolist()
            if name in widths:
                vals = [v.ljust(widths[name], b"\x00") for v in vals]
            lists.append(vals)
        for i, key in enumerate(keys.tolist()):
            out[key] = tuple(col[i] for col in lists)
        return out

    def _key_sampler(self, rng: random.Random):
        cfg = self.config
        if cfg.key_distribution == "uniform" or cfg.table_rows == 1:
            return lambda: rng.randrange(cfg.table_rows)
        zipf = ZipfSampler(cfg.table_rows, cfg.zipf_theta, rng)
        return lambda: zipf.sample() - 1  # rank 1 is the hottest key

    def txn_stream(self, client: int):
        """Infinite deterministic stream of TxnSpec for one client."""
        cfg = self.config
        rng = self._rng("txn", client)
        draw_key = self._key_sampler(rng)
        ro_cut = cfg.txn_mix_read_only
        rmw_cut = ro_cut + cfg.txn_mix_rmw
        while True:
            r = rng.random()
            if r < ro_cut:
                kind = "read_only"
            elif r < rmw_cut:
                kind = "read_modify_write"
            else:
                kind = "insert"
            keys = []
            seen = set()
            while len(keys) < cfg.ops_per_txn:
                if kind == "insert":
                    k = rng.randrange(self.insert_key_bound)
                else:
                    k = draw_key()
                if k not in seen:  # one op per key inside a transaction
                    seen.add(k)
                    keys.append(k)
            values = None
            if kind != "read_only":
                values = tuple(self._row_values(rng) for _ in keys)
            yield TxnSpec(kind, tuple(keys), values)

    def query_stream(self, client: int):
        """Rotates through the configured plans, offset per client."""
        plans = self.config.analytical_plans
        if not plans:
            return iter(())
        start = client % len(plans)
        return itertools.cycle(plans[start:] + plans[:start])

    def actions(self):
        """Round-robin interleaving of all clients' streams, for inspection
        and determinism tests."""
        streams = [self.txn_stream(c) for c in range(
            max(1, self.config.txn_clients))]
        for i in itertools.count():
            client = i % len(streams)
            yield Action(client, next(streams[client]))


def txn_script(spec: TxnSpec):
    """Expand one TxnSpec into engine scheduler ops (see txn.run_interleaved)."""
    ops = [("begin",)]
    if spec.kind == "read_only":
        for key in spec.keys:
            ops.append(("read", key))
    elif spec.kind == "read_modify_write":
        for key, values in zip(spec.keys, spec.values):
            ops.append(("read", key))
            ops.append(("write", key, values))
    else:
        for key, values in zip(spec.keys, spec.values):
            ops.append(("write", key, values))
    ops.append(("commit",))
    return ops


def row_ops_of(spec: TxnSpec, ops_per_txn: int | None = None) -> int:
    """Row touches a spec performs (reads + writes), for demand billing."""
    n = len(spec.keys)
    return 2 * n if spec.kind == "read_modify_write" else n
