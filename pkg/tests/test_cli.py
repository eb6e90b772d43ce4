import subprocess
import sys

import pytest

from fpfs.harness import CSV_HEADER, gen_disjoint_sets
from fpfs.keys import write_dataset


def run_cli(*args, **kw):
    return subprocess.run(
        [sys.executable, "-m", "fpfs.cli", *args],
        capture_output=True,
        text=True,
        **kw,
    )


@pytest.fixture(scope="module")
def datasets(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    S, T = gen_disjoint_sets(2000, 10_000, 61)
    s_file, t_file = str(root / "s.txt"), str(root / "t.txt")
    write_dataset(s_file, S.keys())
    write_dataset(t_file, T.keys())
    overlap_file = str(root / "overlap.txt")
    write_dataset(overlap_file, T.keys()[:50] + S.keys()[:3])
    return {"root": root, "S": S, "T": T, "s": s_file, "t": t_file, "overlap": overlap_file}


@pytest.fixture(scope="module")
def built_filter(datasets):
    out = str(datasets["root"] / "filter.bin")
    proc = run_cli(
        "build", "--s-file", datasets["s"], "--t-file", datasets["t"],
        "--variant", "tf", "--r", "8", "--out", out,
    )
    assert proc.returncode == 0, proc.stderr
    return out, proc.stdout


def parse_kv(stdout):
    return dict(line.split("=", 1) for line in stdout.strip().splitlines())


def test_build_reports_parameters(built_filter):
    _, stdout = built_filter
    kv = parse_kv(stdout)
    assert kv["variant"] == "tf"
    assert kv["r"] == "8"
    assert kv["a"] == "0"
    assert int(kv["f"]) > 0
    assert int(kv["bits"]) > 0
    assert all(part.isdigit() for part in kv["retries"].split(","))


def test_build_empty_t_file(datasets):
    empty = str(datasets["root"] / "empty.txt")
    open(empty, "w").close()
    out = str(datasets["root"] / "tf_empty.bin")
    proc = run_cli(
        "build", "--s-file", datasets["s"], "--t-file", empty,
        "--variant", "tf", "--r", "8", "--out", out,
    )
    assert proc.returncode == 0, proc.stderr
    kv = parse_kv(proc.stdout)
    assert kv["a"] == "0" and kv["f"] == "0"


def test_build_overlap_exits_2(datasets):
    proc = run_cli(
        "build", "--s-file", datasets["s"], "--t-file", datasets["overlap"],
        "--variant", "naive", "--r", "8", "--out", str(datasets["root"] / "x.bin"),
    )
    assert proc.returncode == 2
    assert proc.stdout == ""
    assert len([l for l in proc.stderr.splitlines() if l.startswith("  ")]) == 3


def test_build_if_selects_two_subfilters(datasets):
    # s = 1e4-scale ratios keep c_min at 2
    root = datasets["root"]
    S, T = gen_disjoint_sets(10_000, 100_000, 67)
    s_file, t_file = str(root / "s2.txt"), str(root / "t2.txt")
    write_dataset(s_file, S.keys())
    write_dataset(t_file, T.keys())
    proc = run_cli(
        "build", "--s-file", s_file, "--t-file", t_file,
        "--variant", "if", "--r", "8", "--out", str(root / "if.bin"),
    )
    assert proc.returncode == 0, proc.stderr
    assert parse_kv(proc.stdout)["c"] == "2"


def test_build_exhausted_exits_3(datasets):
    # epsilon 0 leaves no peeling headroom at this size
    proc = run_cli(
        "build", "--s-file", datasets["s"], "--t-file", datasets["t"],
        "--variant", "tf", "--r", "8", "--epsilon", "0.0",
        "--max-retries", "3", "--out", str(datasets["root"] / "y.bin"),
    )
    assert proc.returncode == 3


def test_build_missing_file_exits_1(datasets):
    proc = run_cli(
        "build", "--s-file", str(datasets["root"] / "nope.txt"),
        "--variant", "tf", "--r", "8", "--out", str(datasets["root"] / "z.bin"),
    )
    assert proc.returncode == 1


def test_query_single_keys(built_filter, datasets):
    path, _ = built_filter
    member = datasets["S"].key(0).decode()
    blocked = datasets["T"].key(0).decode()
    proc = run_cli("query", "--filter", path, "--key", member)
    assert proc.returncode == 0
    assert proc.stdout == f"{member}\t1\n"
    proc = run_cli("query", "--filter", path, "--key", blocked)
    assert proc.stdout == f"{blocked}\t0\n"


def test_query_keys_file_preserves_order(built_filter, datasets):
    path, _ = built_filter
    keys = [datasets["T"].key(5), datasets["S"].key(5), datasets["S"].key(6)]
    qfile = str(datasets["root"] / "q.txt")
    write_dataset(qfile, keys)
    proc = run_cli("query", "--filter", path, "--keys-file", qfile)
    assert proc.returncode == 0
    lines = proc.stdout.splitlines()
    assert lines == [
        f"{keys[0].decode()}\t0",
        f"{keys[1].decode()}\t1",
        f"{keys[2].decode()}\t1",
    ]


def test_query_corrupted_filter_exits_1(built_filter, datasets):
    path, _ = built_filter
    data = bytearray(open(path, "rb").read())
    data[len(data) // 2] ^= 0xFF
    bad = str(datasets["root"] / "bad.bin")
    open(bad, "wb").write(bytes(data))
    proc = run_cli("query", "--filter", bad, "--key", "whatever")
    assert proc.returncode == 1
    assert proc.stdout == ""


def test_verify_ok_exits_0(built_filter, datasets):
    path, _ = built_filter
    proc = run_cli("verify", "--filter", path, "--s-file", datasets["s"], "--t-file", datasets["t"])
    assert proc.returncode == 0
    kv = parse_kv("\n".join(l for l in proc.stdout.splitlines() if "=" in l))
    assert kv["false_negatives"] == "0" and kv["t_positives"] == "0"


def test_verify_plain_against_t_exits_4(datasets):
    # an unprotected filter lets T keys through at about t * 2**-r
    out = str(datasets["root"] / "plain.bin")
    proc = run_cli(
        "build", "--s-file", datasets["s"], "--variant", "plain", "--r", "8", "--out", out,
    )
    assert proc.returncode == 0, proc.stderr
    proc = run_cli("verify", "--filter", out, "--s-file", datasets["s"], "--t-file", datasets["t"])
    assert proc.returncode == 4
    kv = parse_kv("\n".join(l for l in proc.stdout.splitlines() if "=" in l))
    count = int(kv["t_positives"])
    expect = 10_000 * 2**-8  # ~39
    assert 10 <= count <= 90
    assert kv["false_negatives"] == "0"


def test_verify_tampered_filter_exits_4(built_filter, datasets):
    path, _ = built_filter
    from fpfs.storage import load_filter, save_filter
    import numpy as np

    filt = load_filter(path)
    filt.table.cells[filt.table.cells.shape[0] // 2] ^= np.uint32(3)
    tampered = str(datasets["root"] / "tampered.bin")
    save_filter(filt, tampered)
    proc = run_cli("verify", "--filter", tampered, "--s-file", datasets["s"], "--t-file", datasets["t"])
    assert proc.returncode == 4


def test_analyze_csv(datasets):
    proc = run_cli("analyze", "--s", "1000000", "--r", "8", "--t-list", "0,10000,10000000")
    assert proc.returncode == 0
    lines = proc.stdout.strip().splitlines()
    assert lines[0] == CSV_HEADER
    rows = [l.split(",") for l in lines[1:]]
    assert len(rows) == 12  # 3 t-values x 4 construction rows
    by_t = {}
    for row in rows:
        by_t.setdefault(int(row[5]), {})[row[0]] = float(row[7])
    # t = 0: all constructions equal the plain model
    assert len(set(by_t[0].values())) == 1
    # tf lowest everywhere; naive worst at large t
    for t, bits in by_t.items():
        if t >= 10**4:
            assert bits["tf"] <= min(bits.values()) + 1e-6
    assert by_t[10**7]["naive"] / by_t[10**7]["tf"] > 10


def test_analyze_lower_bound_column(datasets):
    proc = run_cli(
        "analyze", "--s", "1000000", "--r", "8", "--t-list", "10000", "--fpp", "0.00390625"
    )
    assert proc.returncode == 0
    lines = proc.stdout.strip().splitlines()
    assert lines[0] == CSV_HEADER + ",lower_bound"
    bound = float(lines[1].split(",")[-1])
    tf_bits = float([l for l in lines[1:] if l.startswith("tf")][0].split(",")[7])
    assert bound < tf_bits


def test_analyze_bad_fpp_exits_1(datasets):
    proc = run_cli("analyze", "--s", "10", "--r", "8", "--t-list", "10", "--fpp", "0.9")
    assert proc.returncode == 1


def test_bench_csv_row(datasets):
    proc = run_cli(
        "bench", "--s", "2000", "--t", "10000", "--r", "8", "--variant", "if", "--runs", "2",
    )
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.strip().splitlines()
    assert lines[0] == CSV_HEADER
    row = dict(zip(CSV_HEADER.split(","), lines[1].split(",")))
    assert row["variant"] == "if"
    assert int(row["bits"]) > 0
    assert "pos_ratio_vs_plain=" in proc.stderr


def test_casestudy_scaled(datasets):
    proc = run_cli("casestudy", "--name", "spell", "--scale", "10")
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.strip().splitlines()
    assert lines[0] == CSV_HEADER
    variants = [l.split(",")[0] for l in lines[1:]]
    assert variants == ["plain", "tf", "if-c1", "if-c2"]
    assert "overhead_tf=" in proc.stderr
    assert "predicted_bits_tf_at_full_t=" in proc.stderr


def test_usage_error_exits_1():
    proc = run_cli("build", "--r", "8")
    assert proc.returncode == 1
