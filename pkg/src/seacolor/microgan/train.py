"""Simultaneous training of the four generators and the discriminator."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..errors import NonFiniteGradient
from ..imagecore import RasterImage, write_image
from ..objectives import PART_NAMES, LossReport, LossWeights
from . import autodiff as ad
from . import losses as L
from .data import SyntheticBatch, make_synthetic_batch
from .nets import AttentionDiscriminator, GeneratorSpec, Module, build_discriminator, build_generator
from .optim import Adam

log = logging.getLogger(__name__)

GENERATORS = ("Gd", "Gs", "Gt", "Gj")
CSV_FIELDS = ("step",) + PART_NAMES + ("total",)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch: int = 6
    epochs: int = 1
    seed: int = 100
    weights: LossWeights = field(default_factory=LossWeights)
    image_size: int = 32
    depth: int = 3
    base_width: int = 16
    disc_patch: int = 4
    disc_dim: int = 32
    saturating: bool = False


class Networks:
    """Four generators, the discriminator and one Adam state per network."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.gens: Dict[str, Module] = {}
        for i, name in enumerate(GENERATORS):
            spec = GeneratorSpec.for_name(name, cfg.depth, cfg.base_width)
            self.gens[name] = build_generator(spec, seed=cfg.seed + i)
        self.D: AttentionDiscriminator = build_discriminator(
            cfg.disc_patch, cfg.disc_dim, seed=cfg.seed + len(GENERATORS), image_size=cfg.image_size)
        betas = (cfg.beta1, cfg.beta2)
        self.opt = {n: Adam(g.parameters(), cfg.lr, betas) for n, g in self.gens.items()}
        self.opt["D"] = Adam(self.D.parameters(), cfg.lr, betas)

    def modules(self) -> Dict[str, Module]:
        return {**self.gens, "D": self.D}

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {f"{net}/{k}": v for net, m in self.modules().items() for k, v in m.state_dict().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        for net, m in self.modules().items():
            prefix = f"{net}/"
            m.load_state_dict({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})


def forward_generators(nets: Networks, batch: SyntheticBatch) -> Dict[str, ad.Tensor]:
    g = nets.gens
    x = ad.Tensor(batch.x)
    y_d = g["Gd"](x)
    y_s = g["Gs"](x)
    y_r = y_d + y_s
    y_j = g["Gj"](y_r)
    y_t = g["Gt"](x)
    n_hat = L.resynthesize(y_j, y_t, batch.V)
    return dict(x=x, y_d=y_d, y_s=y_s, y_r=y_r, y_j=y_j, y_t=y_t, n_hat=n_hat)


def generator_terms(nets: Networks, batch: SyntheticBatch, out: Dict[str, ad.Tensor]) -> Dict[str, ad.Tensor]:
    m = batch.mask
    t = L.masked_l1(out["y_t"], batch.T, m)
    d_fake = nets.D(out["x"], out["y_j"])
    return dict(
        l_gd=L.masked_l1(out["y_d"], batch.diffuse, m),
        l_gs=L.masked_l1(out["y_s"], batch.specular, m),
        l_r=L.masked_l2_norm(out["y_r"], batch.cube_rgb, m),
        l_gj=L.masked_l1(out["y_j"], batch.J, m),
        l_t=L.depth_loss(t, out["y_t"], batch.T),
        l_n=L.masked_l1(out["n_hat"], batch.N, m),
        l_adv=L.generator_adversarial(d_fake, nets.cfg.saturating),
    )


def weighted_total(terms: Dict[str, ad.Tensor], w: LossWeights) -> ad.Tensor:
    return (terms["l_adv"] + (terms["l_gs"] + terms["l_gd"]) * w.gamma + terms["l_r"] * w.sigma
            + terms["l_gj"] * w.iota + terms["l_t"] * w.tau + terms["l_n"] * w.nu)


def generator_objective(nets: Networks, batch: SyntheticBatch):
    """Forward pass and the weighted generator objective (no parameter update)."""
    out = forward_generators(nets, batch)
    terms = generator_terms(nets, batch, out)
    return weighted_total(terms, nets.cfg.weights), terms, out


def _grads_finite(params) -> bool:
    return all(p.grad is None or np.all(np.isfinite(p.grad)) for p in params)


def _blame(nets: Networks, batch: SyntheticBatch) -> str:
    """Re-run each term separately to find which one produces a bad gradient."""
    params = [p for g in nets.gens.values() for p in g.parameters()]
    for name in PART_NAMES:
        for p in params:
            p.grad = None
        _, terms, _ = generator_objective(nets, batch)
        terms[name].backward()
        if not _grads_finite(params):
            return name
    return "total"


def train_step(batch: SyntheticBatch, nets: Networks, cfg: Optional[TrainConfig] = None) -> LossReport:
    """One simultaneous update of all generators, then one discriminator update."""
    cfg = cfg or nets.cfg
    for opt in nets.opt.values():
        opt.zero_grad()
    total, terms, out = generator_objective(nets, batch)
    for name, t in terms.items():
        if not np.isfinite(t.item()):
            raise NonFiniteGradient(name, f"loss term {name} is not finite")
    total.backward()
    gen_params = [p for g in nets.gens.values() for p in g.parameters()]
    if not _grads_finite(gen_params):
        raise NonFiniteGradient(_blame(nets, batch))
    for name in GENERATORS:
        nets.opt[name].step()

    nets.opt["D"].zero_grad()
    x = out["x"]
    d_real = nets.D(x, ad.Tensor(batch.J))
    d_fake = nets.D(x, out["y_j"].detach())
    d_loss = L.discriminator_loss(d_real, d_fake)
    d_loss.backward()
    if not _grads_finite(nets.D.parameters()):
        raise NonFiniteGradient("disc")
    nets.opt["D"].step()

    vals = {k: t.item() for k, t in terms.items()}
    return LossReport(total=total.item(), **vals)


def masked_j_error(nets: Networks, batch: SyntheticBatch) -> float:
    """Masked L1 between Gj(Gd(x) + Gs(x)) and the seafloor target."""
    out = forward_generators(nets, batch)
    return L.masked_l1(out["y_j"], batch.J, batch.mask).item()


# --- driver ---------------------------------------------------------------------

@dataclass
class TrainResult:
    history: List[LossReport]
    j_error_start: float
    j_error_end: float
    nets: Networks


def batch_order(seed: int, n_samples: int, batch: int, steps: int) -> List[np.ndarray]:
    """Index sets for each step: a fresh seeded permutation per pass, partial last batch dropped."""
    if not 0 < batch <= n_samples:
        raise ValueError(f"batch must be in [1, {n_samples}], got {batch}")
    rng = np.random.default_rng(seed)
    out = []
    perm = np.array([], dtype=int)
    while len(out) < steps:
        if perm.size < batch:
            perm = rng.permutation(n_samples)
        out.append(np.sort(perm[:batch]))
        perm = perm[batch:]
    return out


def train_toy(cfg: TrainConfig = TrainConfig(), steps: int = 200, n_samples: int = 16,
              out_dir=None, sample_every: int = 50, data: Optional[SyntheticBatch] = None) -> TrainResult:
    """Train on a fixed synthetic set; optionally write CSV, sample grids and a checkpoint."""
    data = data if data is not None else make_synthetic_batch(cfg.seed, n_samples, cfg.image_size)
    nets = Networks(cfg)
    j_start = masked_j_error(nets, data)
    history = []
    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_fh = open(out_dir / "losses.csv", "w", newline="")
        writer = csv.writer(csv_fh)
        writer.writerow(CSV_FIELDS)
    try:
        for step, idx in enumerate(batch_order(cfg.seed, len(data), cfg.batch, steps), start=1):
            rep = train_step(data.subset(idx), nets, cfg)
            history.append(rep)
            if writer is not None:
                writer.writerow([step] + [repr(getattr(rep, k)) for k in CSV_FIELDS[1:]])
                if sample_every and (step % sample_every == 0 or step == steps):
                    write_sample_grid(nets, data.subset(np.arange(min(4, len(data)))),
                                      out_dir / f"samples_{step:05d}.png")
            if step % 25 == 0:
                log.info("step %d total %.4f", step, rep.total)
    finally:
        if writer is not None:
            csv_fh.close()
    j_end = masked_j_error(nets, data)
    if out_dir is not None:
        save_checkpoint(nets, out_dir / "checkpoint")
        (out_dir / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True))
    return TrainResult(history, j_start, j_end, nets)


def write_sample_grid(nets: Networks, batch: SyntheticBatch, path) -> None:
    """Rows of x | y_r | y_t | y_j | N_hat for each sample in ``batch``."""
    out = forward_generators(nets, batch)

    def rgb(a):
        a = np.clip(a, 0.0, 1.0)
        return np.repeat(a, 3, axis=1) if a.shape[1] == 1 else a

    cols = [rgb(out[k].data) for k in ("x", "y_r", "y_t", "y_j", "n_hat")]
    rows = [np.concatenate([c[i] for c in cols], axis=2) for i in range(len(batch))]
    grid = np.concatenate(rows, axis=1).transpose(1, 2, 0)
    write_image(RasterImage(grid), path)


# --- checkpoints ------------------------------------------------------------------

def save_checkpoint(nets: Networks, stem) -> None:
    """Write ``stem.bin`` (concatenated float32 blobs) and ``stem.json`` (index)."""
    stem = Path(stem)
    index = {}
    offset = 0
    with open(stem.with_suffix(".bin"), "wb") as fh:
        for name, arr in nets.state_dict().items():
            blob = arr.astype("<f4").tobytes()
            index[name] = {"offset": offset, "shape": list(arr.shape), "dtype": "float32"}
            fh.write(blob)
            offset += len(blob)
    stem.with_suffix(".json").write_text(json.dumps(index, indent=1, sort_keys=True))


def load_checkpoint(nets: Networks, stem) -> None:
    stem = Path(stem)
    index = json.loads(stem.with_suffix(".json").read_text())
    raw = stem.with_suffix(".bin").read_bytes()
    state = {}
    for name, meta in index.items():
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        state[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=meta["offset"]).reshape(meta["shape"])
    nets.load_state_dict(state)
