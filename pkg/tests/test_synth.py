import numpy as np
import pytest

from mkdti.exceptions import ConfigError
from mkdti.ingest import save_dataset
from mkdti.synth import SynthSpec, block_labels, generate


def test_single_dense_block_is_all_ones():
    ds = generate(SynthSpec(n_drugs=5, n_targets=4, blocks=1, density_in=1.0, density_out=0.0, seed=0))
    np.testing.assert_array_equal(ds.Y, 1.0)


@pytest.mark.parametrize("kw", [dict(density_in=0.2, density_out=0.2), dict(blocks=0),
                                dict(density_in=1.5), dict(sim_noise=-0.1)])
def test_invalid_specs(kw):
    with pytest.raises(ConfigError):
        SynthSpec(**kw)


def test_positive_count_within_three_sigma():
    spec = SynthSpec(n_drugs=60, n_targets=50, blocks=2, density_in=0.3, density_out=0.02, seed=42)
    mean, var = spec.expected_positives()
    assert mean == pytest.approx(1500 * 0.3 + 1500 * 0.02)
    assert abs(generate(spec).Y.sum() - mean) <= 3 * np.sqrt(var)


def test_byte_identical_files(tmp_path):
    spec = SynthSpec(n_drugs=12, n_targets=9, seed=5)
    save_dataset(generate(spec), tmp_path / "a")
    save_dataset(generate(spec), tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    other = tmp_path / "c"
    save_dataset(generate(SynthSpec(n_drugs=12, n_targets=9, seed=6)), other)
    assert (other / "associations.tsv").read_bytes() != (tmp_path / "a" / "associations.tsv").read_bytes()


def test_file_line_counts_match_entities(tmp_path):
    save_dataset(generate(SynthSpec(n_drugs=7, n_targets=5, seed=1)), tmp_path)
    assert len((tmp_path / "drugs.txt").read_text().splitlines()) == 7
    assert len((tmp_path / "targets.txt").read_text().splitlines()) == 5
    assert len((tmp_path / "fingerprints.tsv").read_text().splitlines()) == 7


@pytest.mark.parametrize("noise", [0.0, 0.1, 0.3, 0.45])
def test_similarities_higher_within_blocks(noise):
    spec = SynthSpec(blocks=3, sim_noise=noise, seed=11)
    ds = generate(spec)
    kd, kt = ds.base_kernels()
    bd, bt = block_labels(spec)
    for K, b in ((kd, bd), (kt, bt)):
        same = b[:, None] == b[None, :]
        off = ~np.eye(len(b), dtype=bool)
        assert K[same & off].mean() > K[~same].mean()


def test_block_densities_roughly_match():
    spec = SynthSpec(n_drugs=100, n_targets=100, blocks=2, density_in=0.5, density_out=0.05, seed=3)
    Y = generate(spec).Y
    bd, bt = block_labels(spec)
    matched = bd[:, None] == bt[None, :]
    assert abs(Y[matched].mean() - 0.5) < 0.05
    assert abs(Y[~matched].mean() - 0.05) < 0.02
