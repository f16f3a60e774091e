import csv
import json
import math

import numpy as np
import pytest

from rangebound.bounds import bound_query
from rangebound.harness import (
    CSV_COLUMNS, ConfigError, IngestError, failed, gen_corr_pc, gen_rand_pc, ingest_csv, inject_noise,
    load_config, make_scenario, random_queries, run_experiment, synthetic_dataset, true_value,
)
from rangebound.pcs import satisfies_set
from rangebound.schema import AttributeDomain, Relation, Schema


@pytest.fixture(scope="module")
def small():
    return synthetic_dataset(rows=4000, seed=1)


def line_relation(values):
    s = Schema.of(AttributeDomain.numeric("value", 0.0, 1000.0), AttributeDomain.numeric("t", 0.0, 1000.0))
    v = np.asarray(values, float)
    return Relation.from_columns(s, {"value": v, "t": v.copy()})


def test_ingest_sales_csv(data_dir):
    schema = Schema.from_json(json.loads((data_dir / "sales_schema.json").read_text()))
    rel, skipped = ingest_csv(data_dir / "sales.csv", schema)
    assert len(rel) == 3 and skipped == 0
    assert rel.rows[1][1] == "Chicago" and rel.rows[2][2] == 18.99


def test_ingest_empty_file(tmp_path, data_dir):
    schema = Schema.from_json(json.loads((data_dir / "sales_schema.json").read_text()))
    (tmp_path / "e.csv").write_text("")
    rel, skipped = ingest_csv(tmp_path / "e.csv", schema)
    assert len(rel) == 0 and skipped == 0


def test_ingest_reports_line_numbers(tmp_path, data_dir):
    schema = Schema.from_json(json.loads((data_dir / "sales_schema.json").read_text()))
    p = tmp_path / "bad.csv"
    p.write_text("utc,branch,price\n2019-11-02T00:00:00Z,Chicago,1.0\n2019-11-02T00:00:00Z,Boston,1.0\n"
                 "2019-11-03T00:00:00Z,Chicago,abc\n")
    with pytest.raises(IngestError) as e:
        ingest_csv(p, schema)
    assert e.value.line == 3
    rel, skipped = ingest_csv(p, schema, strict=False)
    assert len(rel) == 1 and skipped == 2


def test_ingest_missing_header_column(tmp_path, data_dir):
    schema = Schema.from_json(json.loads((data_dir / "sales_schema.json").read_text()))
    p = tmp_path / "h.csv"
    p.write_text("utc,price\n1,2\n")
    with pytest.raises(IngestError) as e:
        ingest_csv(p, schema)
    assert e.value.line == 1


def test_synthetic_dataset_is_deterministic():
    a, b = synthetic_dataset(500, 3), synthetic_dataset(500, 3)
    assert a.rows == b.rows
    assert synthetic_dataset(500, 4).rows != a.rows


def test_scenario_zero_fraction(small):
    sc = make_scenario(small, 0.0)
    assert len(sc.missing) == 0 and len(sc.observed_relation) == len(small)


def test_scenario_correlated_top_removes_largest():
    rel = line_relation(range(1, 101))
    sc = make_scenario(rel, 0.1, attr="value")
    assert sorted(sc.missing_relation.columns["value"]) == list(range(91, 101))


def test_scenario_random_is_seeded(small):
    a = make_scenario(small, 0.2, "random", seed=4)
    b = make_scenario(small, 0.2, "random", seed=4)
    c = make_scenario(small, 0.2, "random", seed=5)
    assert np.array_equal(a.missing, b.missing) and not np.array_equal(a.missing, c.missing)
    assert len(a.missing) == 800 and len(np.unique(a.missing)) == 800


def test_scenario_rejects_bad_input(small):
    with pytest.raises(ValueError):
        make_scenario(small, 1.0)
    with pytest.raises(ValueError):
        make_scenario(small, 0.1, "sideways")


def test_corr_pc_single_part(small):
    pcs = gen_corr_pc(small, ["utc"], 1)
    assert len(pcs) == 1 and pcs[0].kappa.kl == len(small) == pcs[0].kappa.ku


def test_corr_pc_cuts_at_quartiles():
    rel = line_relation(np.arange(1000) + 0.5)
    pcs = gen_corr_pc(rel, ["t"], 4)
    cuts = sorted(pc.psi.atoms["t"].lo for pc in pcs)[1:]
    assert cuts == pytest.approx([250.5, 500.5, 750.5])
    assert [pc.kappa.ku for pc in pcs] == [250] * 4


@pytest.mark.parametrize("attrs,n", [(["utc"], 16), (["utc", "value"], 9)])
def test_corr_pc_is_truthful_and_disjoint(small, attrs, n):
    pcs = gen_corr_pc(small, attrs, n)
    assert satisfies_set(small, pcs)
    assert pcs.pairwise_disjoint
    assert sum(pc.kappa.ku for pc in pcs) == len(small)


def test_rand_pc(small):
    assert [pc.id for pc in gen_rand_pc(small, ["utc"], 0, 1)] == ["all"]
    a = gen_rand_pc(small, ["utc", "device"], 5, seed=2)
    b = gen_rand_pc(small, ["utc", "device"], 5, seed=2)
    assert a.to_json() == b.to_json()
    assert satisfies_set(small, a)


def test_noise_zero_is_identity(small):
    pcs = gen_corr_pc(small, ["utc"], 8)
    assert inject_noise(pcs, 0.0, 1).to_json() == pcs.to_json()
    with pytest.raises(ValueError):
        inject_noise(pcs, -1.0, 1)


def test_noise_raises_failures():
    data = synthetic_dataset(3000, 2)
    sc = make_scenario(data, 0.2)
    missing, observed = sc.missing_relation, sc.observed_relation
    base = gen_corr_pc(missing, ["utc"], 16)
    queries = random_queries(data.schema, 60, ["SUM"], ["utc", "device"], seed=8)
    truths = [true_value(data, q) for q in queries]

    def rate(sigma):
        rates = []
        for seed in range(5):
            pcs = inject_noise(base, sigma, seed)
            fails = 0
            for q, t in zip(queries, truths):
                r = bound_query(q, pcs, observed)
                fails += (not r.ok) or failed(t, r.lower, r.upper)
            rates.append(fails / len(queries))
        return float(np.median(rates))

    rates = [rate(s) for s in (0.0, 0.05, 0.3)]
    assert rates[0] == 0.0
    assert rates[0] <= rates[1] <= rates[2] and rates[2] > 0


def test_failed_tolerance():
    assert not failed(10.0, 10.0, 10.0)
    assert failed(10.0, 10.5, 11.0)
    assert failed(10.0, math.nan, 11.0)


SMALL_CFG = {
    "dataset": {"rows": 3000, "seed": 2},
    "queries": {"count": 15},
    "pc": {"corr_n": 8},
    "histogram": {"buckets": 16},
    "record_timing": False,
}


def test_experiment_csv_is_byte_stable(tmp_path):
    run_experiment(SMALL_CFG, tmp_path / "a.csv")
    run_experiment(SMALL_CFG, tmp_path / "b.csv")
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 15 * 9 and {r["micros"] for r in rows} == {"0"}


def test_experiment_pc_baselines_never_fail():
    rep = run_experiment({**SMALL_CFG, "baselines": ["corr-pc", "rand-pc"]})
    assert rep.baselines["corr-pc"].failure_rate == 0.0
    assert rep.baselines["rand-pc"].failure_rate == 0.0
    assert rep.baselines["corr-pc"].median_overestimation >= 1.0


@pytest.mark.parametrize("bad", [
    {"baselines": ["nope"]},
    {"scenario": {"fraction": 1.5}},
    {"queries": {"count": -1}},
    {"queries": {"aggregates": ["AVG"]}},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        load_config(bad)
