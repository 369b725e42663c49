import numpy as np
import pytest

from rivw.errors import DomainError, FormatError
from rivw.fixtures import gwas_fixture, write_fixture
from rivw.gwas_io import LdInfo, read_ld, read_summary, validate_frame
from rivw.pipeline import analyze
from rivw.simulate import SimConfig

CFG = SimConfig(p=20_000, pi_x=0.01, pi_y=0.0, eps_x2=2e-4, tau2=0.0, beta=1.0, seed=21)


@pytest.fixture(scope="module")
def fx():
    return gwas_fixture(CFG, rep=0)


@pytest.fixture(scope="module")
def files(fx, tmp_path_factory):
    d = tmp_path_factory.mktemp("fx")
    write_fixture(fx, d)
    return d


@pytest.fixture(scope="module")
def inputs(files):
    return read_summary(files / "exposure.tsv"), read_summary(files / "outcome.tsv"), read_ld(files / "ld.tsv")


def test_fixture_structure(fx, inputs):
    exp, out, _ = inputs
    assert len(exp) == CFG.p + 200 + 50
    assert len(exp.rejects) == 0 and len(out.rejects) == 0
    assert {"SNP", "BETA", "SE"} <= set(fx.outcome.columns)


def test_pipeline_drops_and_prunes(inputs):
    exp, out, ld = inputs
    res = analyze(exp, out, ld, seed=1)
    assert res.harmonization.to_dict()["dropped_by_reason"] == {"palindromic": 50}
    assert res.n_pruned == CFG.p
    assert res.report.ci_low <= 1.0 <= res.report.ci_high
    assert len(res.diagnostics) == CFG.p


def test_row_order_invariance(fx, inputs):
    exp, out, ld = inputs
    perm = np.random.default_rng(0).permutation(len(exp))
    exp2 = validate_frame(exp.frame.iloc[perm].reset_index(drop=True))
    a = analyze(exp, out, ld, seed=3)
    b = analyze(exp2, out, ld, seed=3)
    assert a.report == b.report


def test_methods(inputs):
    exp, out, ld = inputs
    r = analyze(exp, out, ld, method="rivw", seed=2)
    s = analyze(exp, out, ld, method="srivw")
    i = analyze(exp, out, ld, method="ivw")
    d = analyze(exp, out, ld, method="divw")
    assert s.report.n_selected == d.report.n_selected == CFG.p
    assert i.report.beta_hat < r.report.beta_hat
    assert i.diagnostics["gamma_rb"].isna().all()
    assert r.diagnostics["selected"].sum() == r.report.n_selected
    sel = r.diagnostics[r.diagnostics["selected"] == 1]
    assert (np.abs(sel["z"] + sel["pseudo_noise"]) > r.lam).all()
    with pytest.raises(DomainError):
        analyze(exp, out, ld, method="egger")


def test_in_memory_frames_match_files(fx, inputs):
    # the exposure frame is already canonical; ld pairs go straight into LdInfo
    exp = validate_frame(fx.exposure)
    ld = LdInfo(list(fx.ld.itertuples(index=False, name=None)))
    a = analyze(exp, inputs[1], ld, seed=4)
    b = analyze(*inputs, seed=4)
    assert a.report.beta_hat == pytest.approx(b.report.beta_hat, rel=1e-12)
    assert a.report.n_selected == b.report.n_selected


def test_validate_frame_requires_columns(fx):
    with pytest.raises(FormatError):
        validate_frame(fx.outcome)
