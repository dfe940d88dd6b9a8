"""ADAM/MSE training loop, k-fold experiment harness, run artifacts.

Every run is pinned by its config seed: model initialization, batch
order, and therefore the loss trajectory are reproducible bit for bit
on CPU. Beyond the learning rate the optimizer keeps its conventional
defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace

import numpy as np
import torch

from .data import Pair
from .formats import save_weight_records
from .model import ResidualUNet, export_records, normalize

VALIDATION_HOLDOUT = 4  # in k-fold runs, one validation pair per this many


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 50
    batch_size: int = 4
    rho_min: float = 0.0
    rho_max: float = 1.0
    seed: int = 0
    depth: int = 5
    base_filters: int = 16

    def __post_init__(self):
        if not (self.learning_rate > 0):
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (self.rho_max > self.rho_min):
            raise ValueError("need rho_max > rho_min")


def _stack(pairs: list[Pair], cfg: TrainConfig) -> tuple[torch.Tensor, torch.Tensor]:
    x = np.stack([normalize(p.phase, cfg.rho_min, cfg.rho_max) for p in pairs])
    y = np.stack([p.stain.astype(np.float32) for p in pairs])
    return torch.from_numpy(x[:, None]), torch.from_numpy(y[:, None])


def _mse(model: ResidualUNet, x: torch.Tensor, y: torch.Tensor) -> float:
    model.eval()
    with torch.no_grad():
        return float(torch.mean((model(x) - y) ** 2))


def train(pairs: list[Pair], cfg: TrainConfig) -> tuple[ResidualUNet, dict]:
    """Fit the network on the train split, tracking both loss curves.

    Returns the trained model and {"train": [...], "validation": [...]}
    with one entry per epoch; the validation list stays empty when the
    pairs carry no validation split.
    """
    train_pairs = [p for p in pairs if p.split == "train"]
    val_pairs = [p for p in pairs if p.split == "validation"]
    if not train_pairs:
        raise ValueError("training split is empty")

    torch.manual_seed(cfg.seed)
    model = ResidualUNet(depth=cfg.depth, base_filters=cfg.base_filters)
    optim = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    x, y = _stack(train_pairs, cfg)
    xv, yv = _stack(val_pairs, cfg) if val_pairs else (None, None)
    order = torch.Generator().manual_seed(cfg.seed)

    curves: dict[str, list[float]] = {"train": [], "validation": []}
    n = len(train_pairs)
    for _ in range(cfg.epochs):
        model.train()
        perm = torch.randperm(n, generator=order)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            optim.zero_grad()
            loss = torch.mean((model(x[idx]) - y[idx]) ** 2)
            loss.backward()
            optim.step()
            total += float(loss.detach()) * len(idx)
        curves["train"].append(total / n)
        if val_pairs:
            curves["validation"].append(_mse(model, xv, yv))
    model.eval()
    return model, curves


def evaluate_pearson(model: ResidualUNet, pairs: list[Pair], cfg: TrainConfig) -> float:
    """Pooled Pearson correlation of predictions against ground truth."""
    if not pairs:
        raise ValueError("no pairs to evaluate")
    x, y = _stack(pairs, cfg)
    model.eval()
    with torch.no_grad():
        pred = model(x)
    a = pred.numpy().ravel().astype(np.float64)
    b = y.numpy().ravel().astype(np.float64)
    return float(np.corrcoef(a, b)[0, 1])


def run_kfold(
    pairs: list[Pair],
    cfg: TrainConfig,
    k: int = 5,
    sizes: tuple[int, ...] | None = None,
) -> list[dict]:
    """Train k models per training-set size, score each on the test split.

    The non-test pool is rotated per fold so every fold sees a different
    subset; fold f trains with seed cfg.seed + f. With k=1 the first row
    reproduces a plain train() call on the leading pool slice exactly.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pool = sorted((p for p in pairs if p.split != "test"), key=lambda p: p.fov)
    test = [p for p in pairs if p.split == "test"]
    if not test:
        raise ValueError("k-fold evaluation needs a test split")
    if sizes is None:
        sizes = (len(pool),)

    rows = []
    for size in sizes:
        if size < 1 or size > len(pool):
            raise ValueError(f"size {size} outside 1..{len(pool)}")
        stride = max(1, len(pool) // k)
        for fold in range(k):
            rotated = pool[fold * stride :] + pool[: fold * stride]
            subset = [p.with_split("train") for p in rotated[:size]]
            n_val = max(1, size // VALIDATION_HOLDOUT)
            subset += [p.with_split("validation") for p in rotated[size : size + n_val]]
            fold_cfg = replace(cfg, seed=cfg.seed + fold)
            model, curves = train(subset, fold_cfg)
            rows.append({
                "size": size,
                "fold": fold,
                "rho": evaluate_pearson(model, test, fold_cfg),
                "final_train_mse": curves["train"][-1],
                "final_validation_mse": (
                    curves["validation"][-1] if curves["validation"] else float("nan")
                ),
            })
    return rows


def summarize_kfold(rows: list[dict]) -> dict[int, float]:
    """Mean test correlation per training-set size."""
    sizes = sorted({row["size"] for row in rows})
    return {
        size: float(np.mean([r["rho"] for r in rows if r["size"] == size]))
        for size in sizes
    }


def save_run(directory, model: ResidualUNet, curves: dict, cfg: TrainConfig) -> str:
    """Write weights.picsw1 plus metrics.json; returns the weights path."""
    os.makedirs(directory, exist_ok=True)
    weights_path = os.path.join(directory, "weights.picsw1")
    save_weight_records(weights_path, export_records(model))
    metrics = {
        "config": asdict(cfg),
        "epochs_run": len(curves["train"]),
        "final_train_mse": curves["train"][-1],
        "final_validation_mse": (
            curves["validation"][-1] if curves["validation"] else None
        ),
        "curves": curves,
    }
    with open(os.path.join(directory, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return weights_path
