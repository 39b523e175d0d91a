# tests/test_tools.py

import asyncio

import pytest

from mcp_tools.mcp_server_spde import MODULES, load_modules, registered_tool_names
from resources.caches import list_replacement_caches
from tools.constants import spde_asymptotic_variances, spde_constants
from tools.estimation import spde_estimate, spde_monte_carlo
from tools.simulation import spde_build_cache, spde_simulate

CONFIG = {
    "scheme": {"n": 100, "spatial": {"kind": "named", "name": "S3"}},
    "simulator": {"cutoff": 5},
    "seed": 8,
}


def test_every_module_registers():
    assert load_modules() == []
    names = asyncio.run(registered_tool_names())
    for tool in ("spde_constants", "spde_asymptotic_variances", "spde_simulate",
                 "spde_build_cache", "spde_estimate", "spde_monte_carlo"):
        assert tool in names
    assert "resources.caches" in MODULES


def test_constants_tool():
    record = spde_constants(overrides=["model.alpha_prime=0.4"], y=[0.2, 0.8])
    assert record["y"] == [0.2, 0.8]
    assert record["lambda"] < 0.0 < record["upsilon"]


def test_tools_return_errors_as_dicts(tmp_path):
    failed = spde_constants(overrides=["model.alpha_prime=2"])
    assert failed["exit_code"] == 2 and failed["error"].startswith("ConfigError")
    missing = spde_estimate(str(tmp_path / "nothing.json"), CONFIG)
    assert missing["exit_code"] == 1
    refused = spde_simulate(CONFIG, ["budget=10"], str(tmp_path))
    assert refused["exit_code"] == 3


def test_asymptotic_variances_tool():
    table = spde_asymptotic_variances(CONFIG, ['estimation.estimators=["log_linear"]'])
    assert table["sigma/sigma_sq"]["truth"] == 1.0
    assert table["sigma/sigma_sq"]["variance"] > 0.0
    assert set(table) >= {"log_linear/psi_0", "log_linear/kappa_2", "alpha/alpha_prime"}


def test_simulate_and_estimate_tools(tmp_path):
    simulated = spde_simulate(CONFIG, out_dir=str(tmp_path / "field"))
    assert simulated["path"].endswith("field.json")
    estimated = spde_estimate(simulated["path"], CONFIG, ['estimation.estimators=["sigma", "quarticity"]'],
                              str(tmp_path / "est"))
    assert set(estimated["reports"]) == {"sigma", "quarticity"}
    assert estimated["scheme"]["m"] == 3
    assert estimated["path"].endswith("estimates.json")
    mismatch = spde_estimate(simulated["path"], CONFIG, ["model.alpha_prime=0.7"], str(tmp_path / "est"))
    assert mismatch["exit_code"] == 4


def test_cache_tool_and_resource(tmp_path):
    assert list_replacement_caches() == []
    built = spde_build_cache({"scheme": {"spatial": {"kind": "grid", "M": 3}}}, ["simulator.L=1", "simulator.K_v=4"])
    assert built["entries"] == 4
    listed = list_replacement_caches()
    assert len(listed) == 1 and listed[0]["digest"] == built["digest"]
    assert spde_build_cache(CONFIG)["exit_code"] == 2


def test_monte_carlo_tool(tmp_path):
    result = spde_monte_carlo(CONFIG, ["replications=2"], str(tmp_path), workers=1)
    assert result["summary"]["replications"] == 2 and result["summary"]["complete"]
    assert result["summary"]["config"]["workers"] == 1
    assert result["csv"].endswith("mc_estimates.csv")
    assert result["summary"]["csv"] == "mc_estimates.csv"


@pytest.mark.parametrize("bad", [["replications=0"], ["seed=-1"]])
def test_monte_carlo_tool_validates_the_config(bad):
    assert spde_monte_carlo(CONFIG, bad)["exit_code"] == 2
