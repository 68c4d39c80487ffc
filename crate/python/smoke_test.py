"""Builds the extension module, imports it and runs the fixture corpus through it.

Usage: python3 python/smoke_test.py [--skip-build]
"""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def build() -> Path:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "litknow-python", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    return ROOT / "target" / "release" / "liblitknow.so"


def main() -> None:
    lib = ROOT / "target" / "release" / "liblitknow.so"
    if "--skip-build" not in sys.argv:
        lib = build()
    work = Path(tempfile.mkdtemp(prefix="litknow-smoke-"))
    try:
        shutil.copy(lib, work / "litknow.so")
        sys.path.insert(0, str(work))
        import litknow

        assert litknow.tokenize("Set-shifting in the PFC.") == ["set-shifting", "in", "the", "pfc"]
        assert litknow.format_ratio(74, 631) == "0.117"
        assert litknow.auroc([0.9, 0.8], [0.1, 0.8]) == 0.875

        lexicon = litknow.Lexicon(str(FIXTURES / "lexicon.jsonl"))
        assert len(lexicon) == 18
        text = "Dopamine in the prefrontal cortex."
        found = lexicon.mentions(text)
        assert [(c, text[s:e]) for c, s, e in found] == [
            ("dopamine", "Dopamine"),
            ("prefrontal_cortex", "prefrontal cortex"),
        ], found

        vectors = dict(litknow.embed_edges([("a", "b", 1), ("b", "c", 2), ("c", "a", 1)], dimension=8))
        assert sorted(vectors) == ["a", "b", "c"] and len(vectors["a"]) == 8

        config = work / "config.json"
        config.write_text(
            json.dumps(
                {
                    "walk": {"walk_length": 20, "walks_per_node": 6},
                    "sgns": {"dimension": 16, "window": 5, "epochs": 2},
                }
            )
        )
        engine = litknow.Engine(str(work / "data"), str(FIXTURES / "lexicon.jsonl"), str(config))
        report = engine.ingest(str(FIXTURES / "updates"))
        assert len(report["processed"]) == 3 and not report["failed"], report
        assert engine.rebuild() >= 1
        stats = engine.stats()
        assert stats["articles"] == 9, stats

        p_b_given_a, _ = engine.conditional_probability("dopamine", "set_shifting")
        assert p_b_given_a[0] == 2, p_b_given_a

        hits = engine.related(["prefrontal_cortex"], k=5)
        assert 0 < len(hits) <= 5
        assert all(c != "prefrontal_cortex" for c, _, _ in hits)
        assert "auroc" in engine.auroc()
        print("smoke test passed:", stats)
    finally:
        shutil.rmtree(work, ignore_errors=True)


if __name__ == "__main__":
    main()
