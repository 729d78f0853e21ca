"""Simulation harness: drive drops through the frame loop and collect metrics.

A campaign is a pure function of its configuration and master seed: drop
seeds are spawned from the master, and each drop seed spawns one channel
substream plus one arrival substream per constraint model, so the models of
a drop share an identical frozen graph and rate table while keeping their
own arrival randomness, and toggling one consumer never perturbs another.

Frame order: admission rates from current backlog, arrivals sampled, frame
scheduled against current backlog, queues advanced (arrivals land after
service and become servable next frame).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import DEFAULT_RADIOS, ChannelParams, NodeClass, RadioProfile
from .congestion import Utility, make_admission, make_utility, update_rates, utility_of_rates
from .queues import (ContractViolation, apply_frame, destination_mask,
                     make_queues, sample_arrivals)
from .scheduler import ConstraintModel, Schedule, schedule_frame, select_flows_and_xi
from .topology import DropConfig, DropGenerationError, NetworkGraph, generate_drop

CSV_VERSION_LINE = "# format-version: 1"

ALL_MODELS = (ConstraintModel.MU_MIMO, ConstraintModel.K_TO_1, ConstraintModel.ONE_TO_1)


class ConfigError(ValueError):
    """A configuration file or override is malformed."""


@dataclass(frozen=True)
class SimConfig:
    drop: DropConfig = field(default_factory=DropConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    radios: tuple[RadioProfile, ...] = tuple(DEFAULT_RADIOS.values())
    frames: int = 100_000
    drops: int = 50
    models: tuple[ConstraintModel, ...] = ALL_MODELS
    utility: str = "proportional_fair"
    utility_scale: float = 1.0
    v_value: Optional[float] = None   # explicit V; None scales from the drop
    v_scale: float = 10.0             # V = v_scale * R_max^2 when v_value is None
    arrival_law: str = "deterministic"
    master_seed: int = 1
    snapshot_stride: int = 100        # frame stride of emitted time series
    rate_window: int = 1000           # moving-average window for rate traces
    queue_snapshot_stride: int = 0    # 0 = off; else per-cell queue dumps
    schedule_trace: bool = False      # per-frame active-link dump
    scheduler_method: str = "auto"

    def __post_init__(self):
        if self.frames <= 0 or self.drops <= 0:
            raise ConfigError("frames and drops must be positive")
        if self.snapshot_stride <= 0 or self.rate_window <= 0:
            raise ConfigError("snapshot_stride and rate_window must be positive")
        if not self.models:
            raise ConfigError("at least one constraint model is required")

    def radio_map(self) -> dict[NodeClass, RadioProfile]:
        return {r.node_class: r for r in self.radios}

    def make_utility(self) -> Utility:
        return make_utility(self.utility, self.utility_scale)


def paper_profile(**overrides) -> SimConfig:
    """Full-scale campaign: 10 UEs, 4 relays, 1e5 frames, 50 drops."""
    return replace(SimConfig(), **overrides)


def desk_profile(**overrides) -> SimConfig:
    """Reduced preset that finishes on a laptop: 5 UEs, 2 relays,
    2e4 frames, 10 drops.

    Calibrated so every flow reaches its queue fixed point well inside the
    short horizon (settling time scales with V over the squared flow rate):
    the cell is shrunk to 100 m, V to 1x R_max^2, and the link budget is
    tightened to 125 dB so no user is admitted on a junk link -- a flow
    whose best path moves tens of bits per frame needs ~5e4 frames to
    settle, which only the full-scale preset can afford."""
    base = SimConfig(drop=DropConfig(ue_count=5, rn_count=2,
                                     cell_radius_m=100.0, rn_distance_m=60.0,
                                     pathloss_threshold_db=125.0),
                     frames=20_000, drops=10, v_scale=1.0)
    return replace(base, **overrides)


PROFILES = {"paper": paper_profile, "desk": desk_profile}


# ---------------------------------------------------------------------------
# config file round trip

def config_to_dict(cfg: SimConfig) -> dict:
    return {
        "drop": {
            "cell_radius_m": cfg.drop.cell_radius_m,
            "rn_distance_m": cfg.drop.rn_distance_m,
            "rn_count": cfg.drop.rn_count,
            "ue_count": cfg.drop.ue_count,
            "pathloss_threshold_db": cfg.drop.pathloss_threshold_db,
            "rn_rotation": cfg.drop.rn_rotation,
            "max_ue_retries": cfg.drop.max_ue_retries,
        },
        "channel": {
            "carrier_hz": cfg.channel.carrier_hz,
            "bandwidth_hz": cfg.channel.bandwidth_hz,
            "frame_s": cfg.channel.frame_s,
            "alpha1": cfg.channel.alpha1,
            "alpha2_db": cfg.channel.alpha2_db,
            "thermal_noise_dbm_hz": cfg.channel.thermal_noise_dbm_hz,
            "cluster_rate": cfg.channel.cluster_rate,
            "paths_per_cluster": cfg.channel.paths_per_cluster,
            "angular_spread_mean_deg": cfg.channel.angular_spread_mean_deg,
        },
        "radios": {
            r.node_class.value: {
                "tx_power_dbm": r.tx_power_dbm,
                "noise_figure_db": r.noise_figure_db,
                "array_side": r.array_side,
            } for r in cfg.radios
        },
        "frames": cfg.frames,
        "drops": cfg.drops,
        "models": [m.value for m in cfg.models],
        "utility": cfg.utility,
        "utility_scale": cfg.utility_scale,
        "v": "auto" if cfg.v_value is None else cfg.v_value,
        "v_scale": cfg.v_scale,
        "arrival_law": cfg.arrival_law,
        "master_seed": cfg.master_seed,
        "snapshot_stride": cfg.snapshot_stride,
        "rate_window": cfg.rate_window,
        "queue_snapshot_stride": cfg.queue_snapshot_stride,
        "schedule_trace": cfg.schedule_trace,
        "scheduler_method": cfg.scheduler_method,
    }


def _take(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def config_from_dict(data: dict) -> SimConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    base = SimConfig()
    top = {"drop", "channel", "radios", "frames", "drops", "models", "utility",
           "utility_scale", "v", "v_scale", "arrival_law", "master_seed",
           "snapshot_stride", "rate_window", "queue_snapshot_stride",
           "schedule_trace", "scheduler_method"}
    _take(data, top, "config")
    try:
        drop = base.drop
        if "drop" in data:
            _take(data["drop"], {"cell_radius_m", "rn_distance_m", "rn_count",
                                 "ue_count", "pathloss_threshold_db",
                                 "rn_rotation", "max_ue_retries"}, "drop")
            drop = replace(drop, **data["drop"])
        channel = base.channel
        if "channel" in data:
            _take(data["channel"], {"carrier_hz", "bandwidth_hz", "frame_s",
                                    "alpha1", "alpha2_db", "thermal_noise_dbm_hz",
                                    "cluster_rate", "paths_per_cluster",
                                    "angular_spread_mean_deg"}, "channel")
            channel = replace(channel, **data["channel"])
        radios = dict(DEFAULT_RADIOS)
        for cls_name, spec in data.get("radios", {}).items():
            cls = NodeClass(cls_name)
            _take(spec, {"tx_power_dbm", "noise_figure_db", "array_side"},
                  f"radios.{cls_name}")
            radios[cls] = RadioProfile(node_class=cls, **spec)
        models = base.models
        if "models" in data:
            models = tuple(ConstraintModel(m) for m in data["models"])
        v_raw = data.get("v", "auto")
        if v_raw == "auto":
            v_value = None
        elif isinstance(v_raw, (int, float)) and v_raw > 0:
            v_value = float(v_raw)
        else:
            raise ConfigError('"v" must be "auto" or a positive number')
        return SimConfig(
            drop=drop, channel=channel, radios=tuple(radios.values()),
            frames=int(data.get("frames", base.frames)),
            drops=int(data.get("drops", base.drops)),
            models=models,
            utility=data.get("utility", base.utility),
            utility_scale=float(data.get("utility_scale", base.utility_scale)),
            v_value=v_value,
            v_scale=float(data.get("v_scale", base.v_scale)),
            arrival_law=data.get("arrival_law", base.arrival_law),
            master_seed=int(data.get("master_seed", base.master_seed)),
            snapshot_stride=int(data.get("snapshot_stride", base.snapshot_stride)),
            rate_window=int(data.get("rate_window", base.rate_window)),
            queue_snapshot_stride=int(data.get("queue_snapshot_stride",
                                               base.queue_snapshot_stride)),
            schedule_trace=bool(data.get("schedule_trace", base.schedule_trace)),
            scheduler_method=data.get("scheduler_method", base.scheduler_method),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def load_config(path) -> SimConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError:
        raise
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# metrics

@dataclass
class MetricsLog:
    """Everything recorded for one (drop, model) run."""

    model: str
    drop_index: int
    frames: int
    frame_s: float
    flow_kinds: list[str]
    flow_ues: list[int]
    sum_queue: np.ndarray          # (T,) total queued bits after each frame
    sum_lambda: np.ndarray         # (T,) admitted bits per frame
    arrivals: np.ndarray           # (T, F) injected bits per flow
    delivered: np.ndarray          # (T, F) absorbed bits per flow
    final_queues: np.ndarray       # (N, F)
    v: float
    lambda_max: float

    @property
    def n_flows(self) -> int:
        return self.arrivals.shape[1]

    @property
    def delivered_total(self) -> np.ndarray:
        return self.delivered.sum(axis=1)

    @property
    def per_flow_rate_bits_s(self) -> np.ndarray:
        return self.delivered.sum(axis=0) / (self.frames * self.frame_s)

    @property
    def sum_rate_bits_s(self) -> float:
        return float(self.delivered.sum()) / (self.frames * self.frame_s)

    def sum_utility(self, utility: Utility) -> float:
        return utility_of_rates(self.per_flow_rate_bits_s, utility)


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Causal mean over the trailing window (shorter at the start)."""
    cs = np.concatenate([[0.0], np.cumsum(x)])
    t = np.arange(1, len(x) + 1)
    lo = np.maximum(t - window, 0)
    return (cs[t] - cs[lo]) / (t - lo)


# ---------------------------------------------------------------------------
# single run

def run_single(cfg: SimConfig, g: NetworkGraph, model: ConstraintModel,
               arrivals_seed, drop_index: int = 0,
               out_dir: Optional[Path] = None) -> MetricsLog:
    """Run one (drop, model) simulation; deterministic in its arguments.

    On a contract violation the failing frame's state is dumped (replayable
    npz) next to the run's output when out_dir is given, and the error is
    re-raised with the frame number attached.
    """
    utility = cfg.make_utility()
    adm = make_admission(g, utility, cfg.v_value, cfg.v_scale)
    rng = np.random.default_rng(arrivals_seed)
    q = make_queues(g)
    dmask = destination_mask(g)
    t_frames, n_flows = cfg.frames, g.n_flows

    sum_queue = np.zeros(t_frames)
    sum_lambda = np.zeros(t_frames)
    arrivals = np.zeros((t_frames, n_flows))
    delivered = np.zeros((t_frames, n_flows))

    queue_rows: list[tuple] = []
    trace_rows: list[tuple] = []

    for t in range(t_frames):
        try:
            lam = update_rates(q, adm)
            arr = sample_arrivals(lam, rng, cfg.arrival_law)
            wt = select_flows_and_xi(q, g, model)
            sched = schedule_frame(q, g, model, cfg.scheduler_method, wt=wt)
            q, dlv = apply_frame(q, sched.served, arr, g, dmask)
        except Exception as exc:
            if out_dir is not None:
                out_dir.mkdir(parents=True, exist_ok=True)
                np.savez(out_dir / f"failure_frame_{t}.npz",
                         frame=t, queues=q, model=model.value,
                         drop_index=drop_index)
            raise ContractViolation(
                f"drop {drop_index} model {model.value} frame {t}: {exc}") from exc

        sum_queue[t] = q.sum()
        sum_lambda[t] = lam.sum()
        arrivals[t] = arr.sum(axis=0)
        delivered[t] = dlv
        if cfg.queue_snapshot_stride and t % cfg.queue_snapshot_stride == 0:
            for node in range(q.shape[0]):
                for f in range(n_flows):
                    queue_rows.append((t, node, f, q[node, f]))
        if cfg.schedule_trace:
            for (tx, rx, flow, bits) in sched.served:
                trace_rows.append((t, tx, rx, flow, bits))

    log = MetricsLog(model=model.value, drop_index=drop_index,
                     frames=t_frames, frame_s=cfg.channel.frame_s,
                     flow_kinds=[f.kind for f in g.flows],
                     flow_ues=[f.ue_id for f in g.flows],
                     sum_queue=sum_queue, sum_lambda=sum_lambda,
                     arrivals=arrivals, delivered=delivered,
                     final_queues=q, v=adm.v, lambda_max=adm.lambda_max)
    if out_dir is not None:
        emit_plot_data(log, out_dir, stride=cfg.snapshot_stride,
                       window=cfg.rate_window)
        if queue_rows:
            write_csv(out_dir / "queue_snapshots.csv",
                      ["frame", "node", "flow", "bits"], queue_rows)
        if cfg.schedule_trace:
            write_csv(out_dir / "schedule_trace.csv",
                      ["frame", "tx", "rx", "flow", "served_bits"], trace_rows)
    return log


# ---------------------------------------------------------------------------
# campaign

@dataclass
class RunRecord:
    drop: int
    model: str
    ok: bool
    sum_rate_bits_s: float = math.nan
    sum_utility: float = math.nan
    per_flow_rates: Optional[np.ndarray] = None
    flow_kinds: list[str] = field(default_factory=list)
    flow_ues: list[int] = field(default_factory=list)
    error: str = ""


@dataclass
class CampaignSummary:
    records: list[RunRecord]
    model_stats: dict[str, dict[str, float]]
    gains_pct: dict[str, float]

    def per_drop(self, model: str) -> dict[int, RunRecord]:
        return {r.drop: r for r in self.records if r.model == model and r.ok}


def _summarize(records: list[RunRecord],
               models: tuple[ConstraintModel, ...]) -> tuple[dict, dict]:
    stats: dict[str, dict[str, float]] = {}
    for m in models:
        vals = [r for r in records if r.model == m.value and r.ok]
        sr = np.array([r.sum_rate_bits_s for r in vals])
        ut = np.array([r.sum_utility for r in vals])
        # a starved flow makes a log utility -inf; its std is then undefined
        with np.errstate(invalid="ignore"):
            stats[m.value] = {
                "runs_ok": len(vals),
                "mean_sumrate_bits_s": float(sr.mean()) if len(sr) else math.nan,
                "std_sumrate_bits_s": float(sr.std()) if len(sr) else math.nan,
                "mean_utility": float(ut.mean()) if len(ut) else math.nan,
                "std_utility": float(ut.std()) if len(ut) else math.nan,
            }
    gains: dict[str, float] = {}
    base = ConstraintModel.ONE_TO_1.value
    if base in stats and stats[base]["mean_sumrate_bits_s"] > 0:
        for m in (ConstraintModel.MU_MIMO, ConstraintModel.K_TO_1):
            if m.value in stats and not math.isnan(stats[m.value]["mean_sumrate_bits_s"]):
                gains[f"{m.value}_over_{base}"] = 100.0 * (
                    stats[m.value]["mean_sumrate_bits_s"]
                    / stats[base]["mean_sumrate_bits_s"] - 1.0)
    return stats, gains


def run_campaign(cfg: SimConfig, out_dir: Optional[Path] = None,
                 emit_timeseries: bool = True,
                 log_sink: Optional[list[MetricsLog]] = None) -> CampaignSummary:
    """All drops x all models.  Failures are recorded per run and the
    campaign continues; the summary marks them.  A list passed as log_sink
    collects the full MetricsLog of every successful run."""
    out_dir = Path(out_dir) if out_dir is not None else None
    utility = cfg.make_utility()
    master = np.random.SeedSequence(cfg.master_seed)
    drop_seeds = master.spawn(cfg.drops)
    records: list[RunRecord] = []

    for d in range(cfg.drops):
        subs = drop_seeds[d].spawn(1 + len(cfg.models))
        try:
            g = generate_drop(cfg.drop, cfg.channel, cfg.radio_map(),
                              rng=np.random.default_rng(subs[0]))
        except DropGenerationError as exc:
            for m in cfg.models:
                records.append(RunRecord(drop=d, model=m.value, ok=False,
                                         error=f"drop generation: {exc}"))
            continue
        for mi, model in enumerate(cfg.models):
            run_dir = None
            if out_dir is not None and emit_timeseries:
                run_dir = out_dir / f"drop_{d:03d}" / model.value
                run_dir.mkdir(parents=True, exist_ok=True)
            try:
                log = run_single(cfg, g, model, subs[1 + mi], drop_index=d,
                                 out_dir=run_dir)
            except ContractViolation as exc:
                records.append(RunRecord(drop=d, model=model.value, ok=False,
                                         error=str(exc)))
                continue
            if log_sink is not None:
                log_sink.append(log)
            records.append(RunRecord(
                drop=d, model=model.value, ok=True,
                sum_rate_bits_s=log.sum_rate_bits_s,
                sum_utility=log.sum_utility(utility),
                per_flow_rates=log.per_flow_rate_bits_s,
                flow_kinds=log.flow_kinds, flow_ues=log.flow_ues))

    stats, gains = _summarize(records, cfg.models)
    summary = CampaignSummary(records=records, model_stats=stats, gains_pct=gains)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        emit_campaign_data(summary, out_dir)
    return summary


# ---------------------------------------------------------------------------
# emission

def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(CSV_VERSION_LINE + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(x) for x in row) + "\n")


def emit_plot_data(log: MetricsLog, out_dir, stride: int = 100,
                   window: int = 1000) -> None:
    """Per-run time series and per-user rates, sampled every `stride` frames."""
    out_dir = Path(out_dir)
    t = np.arange(0, log.frames, stride)
    write_csv(out_dir / "queues_vs_time.csv",
              ["frame", "sum_queue_bits"],
              zip(t, log.sum_queue[t]))
    lam_avg = moving_average(log.sum_lambda, window)
    write_csv(out_dir / "source_rate_vs_time.csv",
              ["frame", "sum_lambda_bits_frame", f"sum_lambda_avg{window}"],
              zip(t, log.sum_lambda[t], lam_avg[t]))
    dlv = log.delivered_total
    dlv_avg = moving_average(dlv, window)
    write_csv(out_dir / "delivered_vs_time.csv",
              ["frame", "delivered_bits_frame", f"delivered_avg{window}"],
              zip(t, dlv[t], dlv_avg[t]))
    rates = log.per_flow_rate_bits_s
    write_csv(out_dir / "per_user_rates.csv",
              ["flow", "kind", "ue", "rate_bits_s"],
              ((f, log.flow_kinds[f], log.flow_ues[f], rates[f])
               for f in range(log.n_flows)))


def emit_campaign_data(summary: CampaignSummary, out_dir) -> None:
    out_dir = Path(out_dir)
    write_csv(out_dir / "per_drop_sumrate.csv",
              ["drop", "model", "ok", "sum_rate_bits_s"],
              ((r.drop, r.model, r.ok, r.sum_rate_bits_s) for r in summary.records))
    write_csv(out_dir / "per_drop_utility.csv",
              ["drop", "model", "ok", "sum_utility"],
              ((r.drop, r.model, r.ok, r.sum_utility) for r in summary.records))
    user_rows = []
    for r in summary.records:
        if r.ok and r.per_flow_rates is not None:
            for f in range(len(r.per_flow_rates)):
                user_rows.append((r.drop, r.model, f, r.flow_kinds[f],
                                  r.flow_ues[f], r.per_flow_rates[f]))
    write_csv(out_dir / "per_user_rates.csv",
              ["drop", "model", "flow", "kind", "ue", "rate_bits_s"], user_rows)
    write_csv(out_dir / "summary.csv",
              ["model", "runs_ok", "mean_sumrate_bits_s", "std_sumrate_bits_s",
               "mean_utility", "std_utility"],
              ((m, s["runs_ok"], s["mean_sumrate_bits_s"], s["std_sumrate_bits_s"],
                s["mean_utility"], s["std_utility"])
               for m, s in summary.model_stats.items()))
    write_csv(out_dir / "gains.csv",
              ["comparison", "gain_pct"],
              ((k, v) for k, v in summary.gains_pct.items()))
    failures = [(r.drop, r.model, r.error) for r in summary.records if not r.ok]
    if failures:
        write_csv(out_dir / "failures.csv", ["drop", "model", "error"], failures)


def emit_plots(run_dir) -> list[Path]:
    """Optional SVG line charts next to a run's CSVs (needs matplotlib)."""
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    run_dir = Path(run_dir)
    made = []
    for name, ycol, title in [("queues_vs_time", 1, "total queued bits"),
                              ("delivered_vs_time", 2, "delivered bits/frame (avg)")]:
        csv_path = run_dir / f"{name}.csv"
        if not csv_path.exists():
            continue
        data = np.genfromtxt(csv_path, delimiter=",", skip_header=2)
        if data.ndim != 2 or data.shape[0] == 0:
            continue
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.plot(data[:, 0], data[:, ycol], lw=1.0)
        ax.set_xlabel("frame")
        ax.set_ylabel(title)
        fig.tight_layout()
        svg = run_dir / f"{name}.svg"
        fig.savefig(svg)
        plt.close(fig)
        made.append(svg)
    return made
