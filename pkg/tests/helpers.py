"""Input builders shared by the CLI and acceptance tests."""

import json

import numpy as np

from metamat.fields import FrequencyGrid, SampledField, SpatialGrid, save_field


def write_fields(tmp_path, n0sq: SampledField, nsq: SampledField, **config) -> str:
    save_field(n0sq, tmp_path / "n0sq.json", tmp_path / "n0sq.csv")
    save_field(nsq, tmp_path / "nsq.json", tmp_path / "nsq.csv")
    cfg = {
        "n0sq": {"descriptor": "n0sq.json", "values": "n0sq.csv"},
        "nsq": {"descriptor": "nsq.json", "values": "nsq.csv"},
        "out": "out",
    }
    cfg.update(config)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def negative_band_design(tmp_path, **config) -> str:
    """4x4x4 voxels, 8 frequencies in [1, 2]; target n = 1/(1 + c w^2) with c w^2 >= 2.

    The host is vacuum (n0^2 = 1) and the target carries a small loss so that
    Im p < 0 strictly.
    """
    grid = SpatialGrid((0, 0, 0), (1, 1, 1), (4, 4, 4))
    freqs = FrequencyGrid.linspace(1.0, 2.0, 8)
    w = freqs.as_array()[None, :]
    c_param = np.linspace(2.0, 2.5, grid.n_voxels)[:, None]
    n = 1 / (1 + c_param * w**2)
    nsq = SampledField(grid, freqs, n**2 + 1e-3j)
    n0sq = SampledField(grid, freqs, np.ones((grid.n_voxels, len(freqs))))
    config.setdefault("radius_a", 0.01)
    config.setdefault("kappa", 0.5)
    return write_fields(tmp_path, n0sq, nsq, **config)
