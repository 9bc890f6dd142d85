"""Builds the extension with cargo, imports it and runs the desk preset."""

import importlib.util
import math
import pathlib
import shutil
import subprocess
import sys
import sysconfig
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def build_extension(dest: pathlib.Path) -> pathlib.Path:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "mabeam-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = {"linux": "libmabeam_py.so", "darwin": "libmabeam_py.dylib"}.get(sys.platform, "mabeam_py.dll")
    target = dest / ("mabeam_py" + sysconfig.get_config_var("EXT_SUFFIX"))
    shutil.copy(ROOT / "target" / "release" / lib, target)
    return target


def load(path: pathlib.Path):
    spec = importlib.util.spec_from_file_location("mabeam_py", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        mb = load(build_extension(pathlib.Path(tmp)))

        assert mb.schemes() == ["upa-steering", "upa-optimized", "ma", "lc-ma"], mb.schemes()

        paper = mb.Scenario.preset("paper")
        _, interval = paper.orbital_period()
        assert abs(interval - 289.56) < 0.05, interval
        assert abs(paper.visibility_half_angle_deg() - 35.96) < 0.02
        assert paper.gain_threshold == 8.0

        desk = mb.Scenario.preset("desk")
        assert (desk.slots, desk.antennas) == (10, 8)
        assert mb.Scenario.from_toml(desk.to_toml()).to_toml() == desk.to_toml()

        steer = desk.run("upa-steering")
        ma = desk.run("ma")
        print(steer)
        print(ma)
        assert not ma.aborted
        history = ma.leakage_history
        assert all(b <= a * (1 + 1e-12) for a, b in zip(history, history[1:]))
        assert ma.report.leakage < steer.report.leakage
        assert min(ma.report.gains) >= desk.gain_threshold - 1e-9

        again = desk.evaluate(ma.positions, ma.phases)
        assert math.isclose(again.leakage, ma.report.leakage, rel_tol=1e-9)

        samples = desk.pattern(ma.positions, ma.phases, 0)
        assert len(samples) == 36 * 72
        assert max(g for _, _, g, _ in samples) <= desk.antennas + 1e-9
        assert {t for *_, t in samples} <= {"coverage", "interference", "invisible"}

        try:
            desk.run("phased-array")
        except ValueError as e:
            assert "unknown scheme" in str(e)
        else:
            raise AssertionError("invalid scheme accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
