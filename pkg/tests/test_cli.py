import json
from pathlib import Path

import numpy as np
import pytest

from inkprop import pngio
from inkprop.cli import main
from inkprop.raster import render_lines
from inkprop.synthesis import generate_clip, gt_colored, toy_translating_spec


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def clip_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("clips")
    assert run("synth", "--kind", "translating", "--seed", "3", "--out", out) == 0
    return out


class TestSynth:
    def test_writes_manifest_and_frames(self, clip_dir):
        manifest = json.loads((clip_dir / "manifest.json").read_text())
        assert len(manifest["frames"]) == 4
        for stem in manifest["frames"]:
            assert (clip_dir / f"{stem}_lines.png").exists()
            assert (clip_dir / f"{stem}_gt.png").exists()
            assert (clip_dir / f"{stem}_seg.png").exists()

    def test_multiple_clips(self, tmp_path):
        assert run("synth", "--clips", "2", "--seed", "1", "--out", tmp_path) == 0
        assert (tmp_path / "clip_000" / "manifest.json").exists()
        assert (tmp_path / "clip_001" / "manifest.json").exists()


class TestSegment:
    def test_segment_round_trip(self, clip_dir, tmp_path):
        rc = run("segment", clip_dir / "frame_000_lines.png", "--out", tmp_path)
        assert rc == 0
        seg = pngio.load_segmap(
            tmp_path / "frame_000_lines_seg.png", tmp_path / "frame_000_lines_seg.json"
        )
        frame = generate_clip(toy_translating_spec(3))[0]
        assert seg.n_segments == frame.segmap.n_segments
        assert (seg.ids == frame.segmap.ids).all()

    def test_missing_file_is_data_error(self, tmp_path):
        assert run("segment", tmp_path / "nope.png", "--out", tmp_path) == 2


class TestFlow:
    def test_blockmatch_writes_iflo(self, clip_dir, tmp_path):
        out = tmp_path / "f.iflo"
        rc = run(
            "flow",
            "--ref", clip_dir / "frame_000_lines.png",
            "--tgt", clip_dir / "frame_001_lines.png",
            "--block", "8", "--radius", "8",
            "--out", out,
        )
        assert rc == 0
        from inkprop.flowwarp import load_flow

        flow = load_flow(out)
        assert (flow.height, flow.width) == (64, 64)


class TestMatchAndPropagate:
    def test_match_hu(self, clip_dir, tmp_path):
        rc = run(
            "match",
            "--ref-lines", clip_dir / "frame_000_lines.png",
            "--ref-colors", clip_dir / "frame_000_gt.png",
            "--tgt-lines", clip_dir / "frame_001_lines.png",
            "--backend", "hu",
            "--out", tmp_path,
        )
        assert rc == 0
        result = json.loads((tmp_path / "match.json").read_text())
        assert result["segments"]
        assert (tmp_path / "match.png").exists()

    def test_propagate_deterministic_under_seed(self, tmp_path):
        frames_dir = tmp_path / "frames"
        frames_dir.mkdir()
        clip = generate_clip(toy_translating_spec(9))
        for i, f in enumerate(clip):
            pngio.save_rgb(render_lines(f.lines), frames_dir / f"{i:03d}.png")
        ref = tmp_path / "ref.png"
        pngio.save_rgb(gt_colored(clip[0]), ref)

        outs = []
        for which in ("a", "b"):
            out = tmp_path / which
            rc = run(
                "propagate",
                "--frames", frames_dir,
                "--ref-colors", ref,
                "--backend", "hu",
                "--seed", "7",
                "--out", out,
            )
            assert rc == 0
            outs.append(out)
        for name in sorted(p.name for p in outs[0].iterdir()):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_neural_needs_checkpoint(self, clip_dir, tmp_path):
        rc = run(
            "match",
            "--ref-lines", clip_dir / "frame_000_lines.png",
            "--ref-colors", clip_dir / "frame_000_gt.png",
            "--tgt-lines", clip_dir / "frame_001_lines.png",
            "--backend", "neural",
            "--out", tmp_path,
        )
        assert rc == 2


class TestEval:
    def test_identical_dirs_all_ones(self, clip_dir, tmp_path, capsys):
        pred = tmp_path / "pred"
        gt = tmp_path / "gt"
        pred.mkdir()
        gt.mkdir()
        for i, f in enumerate(generate_clip(toy_translating_spec(3))):
            img = gt_colored(f)
            pngio.save_rgb(img, pred / f"{i:03d}.png")
            pngio.save_rgb(img, gt / f"{i:03d}.png")
        report = tmp_path / "report.json"
        rc = run("eval", "--pred", pred, "--gt", gt, "--out", report)
        assert rc == 0
        out = capsys.readouterr().out
        assert "Acc" in out and "Pix-B-MIoU" in out
        data = json.loads(report.read_text())
        for key in ("acc", "acc_thres", "pix_acc", "pix_f_acc", "pix_b_miou"):
            assert data["aggregate"][key] == 1.0

    def test_mismatched_counts_data_error(self, tmp_path):
        pred = tmp_path / "p"
        gt = tmp_path / "g"
        pred.mkdir()
        gt.mkdir()
        assert run("eval", "--pred", pred, "--gt", gt) == 2


class TestUsageErrors:
    def test_unknown_command_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_missing_required_arg_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            main(["segment"])  # missing image and --out
        assert exc.value.code == 1
