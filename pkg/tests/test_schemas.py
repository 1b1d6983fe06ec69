import json
from pathlib import Path

import pytest

jsonschema = pytest.importorskip("jsonschema")
from referencing import Registry, Resource  # noqa: E402

from pvar.cli import main  # noqa: E402
from pvar.model import model_to_dict  # noqa: E402
from pvar.montecarlo import dgp_catalog  # noqa: E402

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "docs" / "schemas"


@pytest.fixture(scope="module")
def validator():
    schemas = {p.name: json.loads(p.read_text()) for p in SCHEMA_DIR.glob("*.json")}
    registry = Registry().with_resources((name, Resource.from_contents(s)) for name, s in schemas.items())

    def validate(doc, name):
        jsonschema.Draft202012Validator(schemas[name], registry=registry).validate(doc)

    return validate


@pytest.fixture(scope="module")
def documents(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("docs")
    model = model_to_dict(dgp_catalog("dgp2"))
    (tmp / "m.json").write_text(json.dumps(model))
    (tmp / "c.json").write_text(json.dumps(model["constraints"]))
    dataset = {"path": "s.csv", "season_length": 4, "transform": "none"}
    (tmp / "d.json").write_text(json.dumps(dataset))
    experiment = {"dgp": "dgp1", "noise": "weak", "N_list": [80], "reps": 2, "M_list": [2], "tests": ["Q1", "Q3"],
                  "alphas": [0.05], "seed": 3, "workers": 1, "burn_in_years": 10, "include_global": True}
    (tmp / "e.json").write_text(json.dumps(experiment))
    steps = [
        ["simulate", "--model", tmp / "m.json", "--years", 80, "--seed", 1, "--out", tmp / "s.csv"],
        ["fit", "--data", tmp / "d.json", "--order", 1, "--constraints", tmp / "c.json", "--out", tmp / "f.json",
         "--lrv-rmax", 2],
        ["diagnose", "--fit", tmp / "f.json", "--max-lag", 2, "--global", "--bands", 0.05, "--out",
         tmp / "r.json", "--lrv-rmax", 2],
        ["mc-size", "--config", tmp / "e.json", "--json", tmp / "t.json", "--csv", tmp / "t.csv"],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0
    load = lambda name: json.loads((tmp / name).read_text())
    return {"model": model, "constraints": model["constraints"], "dataset": dataset, "experiment": experiment,
            "fit": load("f.json"), "report": load("r.json"), "table": load("t.json")}


class TestSchemas:
    @pytest.mark.parametrize("key,schema", [
        ("model", "model.schema.json"),
        ("constraints", "constraints.schema.json"),
        ("dataset", "dataset.schema.json"),
        ("experiment", "experiment.schema.json"),
        ("fit", "fit.schema.json"),
        ("report", "report.schema.json"),
        ("table", "rejection_table.schema.json"),
    ])
    def test_documents_validate(self, documents, validator, key, schema):
        validator(documents[key], schema)

    def test_rejects_bad_model(self, validator):
        with pytest.raises(jsonschema.ValidationError):
            validator({"s": 0, "d": 1, "p": [], "phi": {}, "sigma_eps": {}}, "model.schema.json")
