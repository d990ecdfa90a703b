from reembedqa.gradcheck_suite import default_checks, run_suite

CORE_OPS = {"add", "sub", "mul", "neg", "scale", "one_minus", "bias_add",
            "matmul", "transpose", "reshape", "sum", "sigmoid", "tanh", "relu",
            "softmax", "log_softmax", "pick", "concat", "slice", "flip_rows",
            "gather_rows", "tile_rows", "segment_max", "dropout"}


def test_every_core_op_passes_over_20_seeds():
    checks = [c for c in default_checks() if c.name in CORE_OPS]
    assert {c.name for c in checks} == CORE_OPS
    for seed in range(20):
        for check in checks:
            err = check.run(seed)
            assert err < 1e-4, f"{check.name} failed at seed {seed}: {err:.3e}"


def test_composite_checks_pass_over_3_seeds():
    composites = [c for c in default_checks() if c.name not in CORE_OPS]
    for seed in (0, 1, 2):
        for check in composites:
            err = check.run(seed)
            assert err < 1e-4, f"{check.name} failed at seed {seed}: {err:.3e}"


def test_run_suite_reports_each_check_once():
    ok, rows = run_suite()
    names = [r["op"] for r in rows]
    assert ok
    assert len(names) == len(set(names))
    assert all({"op", "max_relative_error", "pass"} <= set(r) for r in rows)
