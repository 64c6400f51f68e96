"""Run configuration: sectioned key=value files with strict validation.

Every key has a declared type and default; unknown sections or keys are
rejected by name.  Command-line ``--set section.key=value`` overrides and
the environment overrides (BEAMALIGN_OUTDIR, BEAMALIGN_WORKERS) are
applied before validation, and the fully resolved configuration is echoed
to the output directory for provenance.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from .harness import ExperimentSpec

__all__ = ["ConfigError", "RunConfig", "SCHEMA", "load_config", "resolved_text"]


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_int_tuple(s: str) -> tuple[int, ...]:
    parts = [p.strip() for p in s.split(",") if p.strip()]
    return tuple(int(p) for p in parts)


_PARSERS = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": str,
    "ints": _parse_int_tuple,
}

# section -> key -> (type, default); a None default marks a required key.
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "experiment": {
        "mode": ("str", "direct"),
        "policy": ("str", None),
        "m_t": ("int", 16),
        "m_r": ("int", 8),
        "n_ris": ("int", 16),
        "n_h": ("int", 4),
        "l_p": ("int", 3),
        "l_pt": ("int", 3),
        "l_pr": ("int", 3),
        "angle_min_deg": ("float", -60.0),
        "angle_max_deg": ("float", 60.0),
        "rounds": ("int", 4),
        "snr_db": ("float", 0.0),
    },
    "network": {
        "hidden_a": ("int", 64),
        "hidden_b": ("int", 64),
        "head_hidden": ("ints", (64, 64)),
        "final_hidden": ("ints", (64, 64)),
        "decoder_hidden": ("ints", (64, 64)),
        "batchnorm": ("bool", True),
        "tied": ("bool", True),
        "unit_modulus_beams": ("bool", False),
        "policy_seed": ("int", 0),
    },
    "train": {
        "batch_size": ("int", 1024),
        "lr": ("float", 1e-4),
        "lr_final": ("float", 1e-5),
        "max_steps": ("int", 5000),
        "eval_every": ("int", 50),
        "patience": ("int", 10),
        "val_episodes": ("int", 10000),
        "seed": ("int", 1),
    },
    "evaluate": {
        "episodes": ("int", 10000),
        "seed": ("int", 2),
        "chunk_episodes": ("int", 1000),
        "workers": ("int", 1),
    },
    "baselines": {
        "omp_sparsity": ("int", 0),
        "omp_grid_t": ("int", 0),
        "omp_grid_r": ("int", 0),
        "bcd_iters": ("int", 200),
        "bcd_tol": ("float", 1e-12),
        "bcd_restarts": ("int", 2),
        "codebook_grid": ("int", 512),
    },
    "output": {
        "dir": ("str", None),
    },
}


@dataclass
class RunConfig:
    spec: ExperimentSpec
    policy: str
    out_dir: str
    values: dict[str, dict[str, object]]


def _apply_overrides(raw: dict[str, dict[str, str]], overrides) -> None:
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        key_path, value = item.split("=", 1)
        section, key = key_path.split(".", 1)
        raw.setdefault(section.strip(), {})[key.strip()] = value.strip()


def load_config(path: str | None, overrides=None, env=None) -> RunConfig:
    env = os.environ if env is None else env
    raw: dict[str, dict[str, str]] = {}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path!r}")
        for section in parser.sections():
            raw[section] = dict(parser.items(section))
    _apply_overrides(raw, overrides)
    if "BEAMALIGN_OUTDIR" in env:
        raw.setdefault("output", {})["dir"] = env["BEAMALIGN_OUTDIR"]
    if "BEAMALIGN_WORKERS" in env:
        raw.setdefault("evaluate", {})["workers"] = env["BEAMALIGN_WORKERS"]

    for section in raw:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in raw[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key '{section}.{key}'")

    values: dict[str, dict[str, object]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (typ, default) in keys.items():
            if section in raw and key in raw[section]:
                try:
                    values[section][key] = _PARSERS[typ](raw[section][key])
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"bad value for '{section}.{key}': {exc}") from exc
            elif default is None:
                raise ConfigError(f"missing required config key '{section}.{key}'")
            else:
                values[section][key] = default

    e, n, t, v, b = (values[s] for s in ("experiment", "network", "train", "evaluate", "baselines"))
    spec = ExperimentSpec(
        mode=e["mode"],
        m_t=e["m_t"],
        m_r=e["m_r"],
        n_ris=e["n_ris"],
        n_h=e["n_h"],
        l_p=e["l_p"],
        l_pt=e["l_pt"],
        l_pr=e["l_pr"],
        angle_min_deg=e["angle_min_deg"],
        angle_max_deg=e["angle_max_deg"],
        rounds=e["rounds"],
        snr_db=e["snr_db"],
        hidden_a=n["hidden_a"],
        hidden_b=n["hidden_b"],
        head_hidden=n["head_hidden"],
        final_hidden=n["final_hidden"],
        decoder_hidden=n["decoder_hidden"],
        batchnorm=n["batchnorm"],
        tied=n["tied"],
        unit_modulus_beams=n["unit_modulus_beams"],
        policy_seed=n["policy_seed"],
        batch_size=t["batch_size"],
        lr=t["lr"],
        lr_final=t["lr_final"],
        max_steps=t["max_steps"],
        eval_every=t["eval_every"],
        patience=t["patience"],
        val_episodes=t["val_episodes"],
        train_seed=t["seed"],
        eval_episodes=v["episodes"],
        eval_seed=v["seed"],
        chunk_episodes=v["chunk_episodes"],
        workers=v["workers"],
        omp_sparsity=b["omp_sparsity"],
        omp_grid_t=b["omp_grid_t"],
        omp_grid_r=b["omp_grid_r"],
        bcd_iters=b["bcd_iters"],
        bcd_tol=b["bcd_tol"],
        bcd_restarts=b["bcd_restarts"],
        codebook_grid=b["codebook_grid"],
    )
    if spec.mode not in ("direct", "ris"):
        raise ConfigError(f"experiment.mode must be 'direct' or 'ris', got {spec.mode!r}")
    return RunConfig(spec=spec, policy=e["policy"], out_dir=values["output"]["dir"], values=values)


def resolved_text(cfg: RunConfig) -> str:
    """INI text of every resolved key (for provenance echoing)."""
    lines = []
    for section, keys in cfg.values.items():
        lines.append(f"[{section}]")
        for key, val in keys.items():
            if isinstance(val, tuple):
                val = ",".join(str(x) for x in val)
            lines.append(f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)
