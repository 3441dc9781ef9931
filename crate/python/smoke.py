"""Smoke test for the eccvol Python extension.

Build first:  cd crates/py && maturin develop --release
Then:         python python/smoke.py
"""

import math
import os
import shutil
import tempfile

import eccvol

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURE = os.path.join(ROOT, "crates", "core", "fixtures", "synthetic")


def check_embedding_files(tmp):
    m = eccvol.EmbeddingMatrix.padded([[1.0, 2.0], [3.0, 4.0]], capacity=4)
    assert (m.rows, m.cols, m.valid_rows()) == (4, 2, 2)
    assert m.mask == [True, True, False, False]
    raw = m.to_bytes()
    assert raw[:4] == b"ECCE" and len(raw) == eccvol.embedding_file_len(4, 2)
    assert eccvol.EmbeddingMatrix.from_bytes(raw) == m
    path = os.path.join(tmp, "m.bin")
    m.write(path)
    assert eccvol.EmbeddingMatrix.read(path) == m
    assert eccvol.embedding_file_len(520, 512) == 1_065_499
    try:
        eccvol.EmbeddingMatrix.from_bytes(b"NOPE")
    except eccvol.EccvolError:
        pass
    else:
        raise AssertionError("bad magic accepted")


def check_labels_and_split():
    prices = [100.0 * math.exp(0.01 * i * (-1) ** i) for i in range(10)]
    v = eccvol.log_volatility(prices, 3)
    scaled = eccvol.log_volatility([p * 7.0 for p in prices], 3)
    assert abs(v - scaled) < 1e-12
    calls = [(f"c{i}", f"2021-01-{i + 1:02d}") for i in range(10)]
    train, test = eccvol.temporal_split(calls, 0.8)
    assert train == [f"c{i}" for i in range(8)] and test == ["c8", "c9"]


def check_providers_and_retrieval():
    p = eccvol.StubProvider(seed=1)
    t = p.embed_text("guidance raised")
    assert len(t) == eccvol.TEXT_DIM
    assert abs(sum(x * x for x in t) - 1.0) < 1e-5
    assert p.embed_text("guidance raised") == t
    s = p.embed_sentences(["a", "b"])
    assert len(s) == 2 and len(s[0]) == eccvol.SENTENCE_DIM
    chunks = eccvol.chunk_text("One. Two. Three. " * 50, 120, 20)
    assert len(chunks) > 1
    hits = eccvol.top_k([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [1.0, 0.1], 2)
    assert [i for i, _ in hits] == [0, 2]


def check_pipeline(tmp):
    work = os.path.join(tmp, "run")
    shutil.copytree(FIXTURE, work)
    pipe = eccvol.Pipeline(os.path.join(work, "config.toml"))
    rows = pipe.run()
    assert len(rows) == 1
    name, mean, *per_tau = rows[0]
    assert abs(mean - sum(per_tau) / 4) < 1e-9
    print(f"pipeline: {name} mean MSE {mean:.4f}")


def main():
    with tempfile.TemporaryDirectory() as tmp:
        check_embedding_files(tmp)
        check_labels_and_split()
        check_providers_and_retrieval()
        check_pipeline(tmp)
    print("smoke OK")


if __name__ == "__main__":
    main()
