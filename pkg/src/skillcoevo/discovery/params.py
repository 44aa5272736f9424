from __future__ import annotations

from dataclasses import dataclass

from ..envs import ConfigError


@dataclass(frozen=True)
class MaintenanceParams:
    """Thresholds shared by segmentation decoding and bank curation."""

    theta_consensus: float = 0.6
    theta_verify: float = 0.8
    n_mat: int = 10
    theta_merge: float = 0.8
    theta_split_pass: float = 0.5
    retire_window: int = 3
    theta_group: float = 0.5
    delta_new: float = 0.30
    tau_match: float = 0.35
    split_cluster_min: float = 0.4

    def __post_init__(self) -> None:
        for name in ("theta_consensus", "theta_verify", "theta_merge", "theta_split_pass",
                     "theta_group", "delta_new", "tau_match", "split_cluster_min"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v!r}")
        if self.n_mat < 1 or self.retire_window < 1:
            raise ConfigError("n_mat and retire_window must be >= 1")
