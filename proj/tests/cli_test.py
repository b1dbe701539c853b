"""End-to-end checks of the playprune command line.

usage: cli_test.py <playprune binary> <source dir>
"""

import json
import os
import re
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import jsonschema
from referencing import Registry, Resource

BIN = None
SRC = None


def run(*args, env=None, check=True):
    p = subprocess.run([BIN, *map(str, args)], capture_output=True, text=True, env=env)
    if check and p.returncode != 0:
        raise AssertionError(f"{args} exited {p.returncode}\n{p.stdout}\n{p.stderr}")
    return p


def schema_validator(name):
    schemas = {}
    for path in (SRC / "schemas").glob("*.schema.json"):
        doc = json.loads(path.read_text())
        schemas[doc["$id"]] = Resource.from_contents(doc)
    registry = Registry().with_resources(schemas.items())
    schema = json.loads((SRC / "schemas" / name).read_text())
    return jsonschema.Draft202012Validator(schema, registry=registry)


class Cli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.toy = SRC / "configs" / "toy.cfg"
        for run_name in ("a", "b"):
            run("prune", "--config", cls.toy, "--epsilon", "2.0", "--seed", "1",
                "--out", cls.root / run_name, "--quiet")

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_account_vgg16(self):
        out = run("account", "--config", SRC / "configs" / "vgg16_cifar.cfg").stdout
        params = int(re.search(r"params\s+(\d+)", out).group(1))
        flops = int(re.search(r"flops\s+(\d+)", out).group(1))
        self.assertLess(abs(params - 15.0e6) / 15.0e6, 0.01)
        self.assertLess(abs(flops - 313.7e6) / 313.7e6, 0.01)
        j = json.loads(run("account", "--config", SRC / "configs" / "vgg16_cifar_pp1.cfg",
                           "--json").stdout)
        schema_validator("account.schema.json").validate(j)
        self.assertLess(abs(j["params"] - 1.13e6) / 1.13e6, 0.02)
        self.assertLess(abs(j["flops"] - 54.0e6) / 54.0e6, 0.02)

    def test_unknown_flag_and_subcommand(self):
        p = run("prune", "--config", self.toy, "--bogus", "1", check=False)
        self.assertNotEqual(p.returncode, 0)
        self.assertIn("Usage", p.stderr)
        p = run("frobnicate", check=False)
        self.assertNotEqual(p.returncode, 0)
        self.assertIn("Usage", p.stderr)

    def test_config_errors_name_the_field(self):
        p = run("prune", "--config", self.toy, "--alpha", "150", "--out", self.root / "bad",
                check=False)
        self.assertNotEqual(p.returncode, 0)
        self.assertIn("alpha", p.stderr)
        bad = self.root / "bad.cfg"
        bad.write_text(self.toy.read_text().replace("lr = 0.02", "lr = fast"))
        p = run("prune", "--config", bad, "--out", self.root / "bad", check=False)
        self.assertNotEqual(p.returncode, 0)
        self.assertIn("optimizer.lr", p.stderr)
        p = run("eval", "--config", self.toy, "--checkpoint", self.root / "nope.ppck",
                check=False)
        self.assertNotEqual(p.returncode, 0)

    def test_prune_twice_is_byte_identical(self):
        for name in ("summary.json", "epochs.jsonl", "epochs.csv"):
            self.assertEqual((self.root / "a" / name).read_bytes(),
                             (self.root / "b" / name).read_bytes(), name)

    def test_emitted_json_matches_schemas(self):
        summary = schema_validator("summary.schema.json")
        epoch = schema_validator("epoch.schema.json")
        summary.validate(json.loads((self.root / "a" / "summary.json").read_text()))
        for line in (self.root / "a" / "epochs.jsonl").read_text().splitlines():
            epoch.validate(json.loads(line))
        out = self.root / "os"
        run("oneshot", "--config", self.toy, "--target", "30", "--finetune-epochs", "2",
            "--out", out, "--quiet")
        s = json.loads((out / "summary.json").read_text())
        summary.validate(s)
        self.assertEqual(s["kind"], "oneshot")
        self.assertGreaterEqual(s["reduction"]["flops_percent"], 30.0)
        for line in (out / "epochs.jsonl").read_text().splitlines():
            epoch.validate(json.loads(line))

    def test_eval_reproduces_recorded_accuracy(self):
        s = json.loads((self.root / "a" / "summary.json").read_text())
        out = run("eval", "--config", self.toy, "--checkpoint", self.root / "a" / "final.ppck",
                  "--split", "validation").stdout
        self.assertEqual(out.strip(), f"validation accuracy {s['final']['accuracy']:.4f}%")
        out = run("eval", "--config", self.toy, "--checkpoint",
                  self.root / "a" / "last_good.ppck").stdout
        self.assertEqual(out.strip(), f"validation accuracy {s['last_good_accuracy']:.4f}%")
        out = run("eval", "--config", self.toy, "--checkpoint", self.root / "a" / "final.ppck",
                  "--split", "test").stdout
        self.assertEqual(out.strip(), f"test accuracy {s['final']['test_accuracy']:.4f}%")

    def test_report_writes_series(self):
        out = self.root / "series"
        run("report", "--in", self.root / "a", "--out", out)
        epochs = len((self.root / "a" / "epochs.jsonl").read_text().splitlines())
        for name in ("epochs.csv", "census.csv", "accuracy.csv", "flops.csv"):
            self.assertTrue((out / name).exists(), name)
        rows = (out / "accuracy.csv").read_text().splitlines()
        self.assertEqual(rows[0], "epoch,accuracy")
        self.assertEqual(len(rows), epochs + 1)

    def test_seed_falls_back_to_environment(self):
        cfg = self.root / "noseed.cfg"
        text = self.toy.read_text()
        self.assertIn("[campaign]\nseed = 1\n", text)
        cfg.write_text(text.replace("[campaign]\nseed = 1\n", "[campaign]\n"))
        env = dict(os.environ, PP_SEED="4")
        run("prune", "--config", cfg, "--out", self.root / "env", "--quiet", env=env)
        run("prune", "--config", self.toy, "--seed", "4", "--out", self.root / "flag", "--quiet")
        env_s = json.loads((self.root / "env" / "summary.json").read_text())
        flag_s = json.loads((self.root / "flag" / "summary.json").read_text())
        self.assertEqual(env_s["seed"], 4)
        self.assertEqual(env_s, flag_s)


if __name__ == "__main__":
    BIN = sys.argv[1]
    SRC = Path(sys.argv[2])
    unittest.main(argv=sys.argv[:1], verbosity=2)
