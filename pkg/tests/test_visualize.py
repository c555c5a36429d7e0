"""Trajectory rendering: manifest parsing, layout arithmetic, box drawing."""

import numpy as np
import pytest

from afh import DataError, EpisodeConfig, export_trajectory, run_episode
from afh.image_ops import PatchGeometry, PatchLocation, load_png, patch_bounds
from afh.visualize import (
    BOX_COLOR,
    CELL_PAD,
    ManifestRow,
    grid_layout,
    read_manifest,
    render_trajectory,
)

from conftest import random_image, tiny_geometry


@pytest.fixture
def exported(tiny_random_params, rng, tmp_path):
    cfg = EpisodeConfig(steps=2, geom=tiny_geometry(), mode="sample")
    traj = run_episode(
        tiny_random_params, random_image(rng), cfg, np.random.default_rng(4)
    )
    manifest = export_trajectory(traj, tmp_path / "traj")
    return traj, manifest.parent


class TestReadManifest:
    def test_round_trip_from_export(self, exported):
        traj, traj_dir = exported
        rows = read_manifest(traj_dir / "manifest.csv")
        assert [r.step for r in rows] == [1, 2]
        assert [r.loc for r in rows] == [rec.loc for rec in traj.records]
        for row, rec in zip(rows, traj.records):
            # the manifest stores 10 significant digits
            assert row.log_prob == pytest.approx(rec.log_prob, rel=1e-9)

    def test_greedy_rows_have_no_log_prob(self, tmp_path):
        p = tmp_path / "manifest.csv"
        p.write_text("step,x,y,log_prob\n1,3,4,\n")
        [row] = read_manifest(p)
        assert row.log_prob is None
        assert row.loc == PatchLocation(3, 4)

    def test_missing_file_named(self, tmp_path):
        with pytest.raises(DataError, match="manifest.csv"):
            read_manifest(tmp_path / "manifest.csv")

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "manifest.csv"
        p.write_text("x,y,step,log_prob\n1,1,1,0\n")
        with pytest.raises(DataError, match="header"):
            read_manifest(p)

    def test_short_row_reports_line_number(self, tmp_path):
        p = tmp_path / "manifest.csv"
        p.write_text("step,x,y,log_prob\n1,3,4,-0.5\n2,5\n")
        with pytest.raises(DataError, match=r"manifest\.csv:3"):
            read_manifest(p)

    def test_non_numeric_cell_reports_line_number(self, tmp_path):
        p = tmp_path / "manifest.csv"
        p.write_text("step,x,y,log_prob\none,3,4,-0.5\n")
        with pytest.raises(DataError, match=r"manifest\.csv:2"):
            read_manifest(p)

    def test_non_consecutive_steps_rejected(self, tmp_path):
        p = tmp_path / "manifest.csv"
        p.write_text("step,x,y,log_prob\n1,3,4,-0.5\n3,3,4,-0.5\n")
        with pytest.raises(DataError, match="consecutive"):
            read_manifest(p)


class TestGridLayout:
    def test_dimensions_for_wide_image(self):
        lay = grid_layout(8, 8, 4, 4, steps=3)
        assert lay["cell_width"] == 8
        assert lay["column_stride"] == 8 + CELL_PAD
        assert lay["canvas_width"] == 3 * 8 + 2 * CELL_PAD
        assert lay["canvas_height"] == 8 + CELL_PAD + 4 + CELL_PAD + 4
        assert lay["x_image"] == 0
        assert lay["x_patch"] == 2
        assert lay["y_before"] == 8 + CELL_PAD
        assert lay["y_after"] == 8 + CELL_PAD + 4 + CELL_PAD

    def test_patch_wider_than_image_centers_the_image(self):
        # a patch may exceed the image by up to a factor of two per axis
        lay = grid_layout(8, 8, 4, 12, steps=1)
        assert lay["cell_width"] == 12
        assert lay["x_image"] == 2
        assert lay["x_patch"] == 0
        assert lay["canvas_width"] == 12


class TestRenderTrajectory:
    def test_canvas_matches_layout_and_content(self, exported):
        traj, traj_dir = exported
        out = render_trajectory(traj_dir, traj_dir / "render.png")
        canvas = load_png(out)
        lay = grid_layout(8, 8, 4, 4, steps=2)
        assert canvas.shape == (lay["canvas_height"], lay["canvas_width"], 3)

        # bottom row of column i holds the enhanced patch, bit-exact through
        # the PNG round trip
        for i, rec in enumerate(traj.records):
            x0 = i * lay["column_stride"] + lay["x_patch"]
            y0 = lay["y_after"]
            cell = canvas[y0 : y0 + 4, x0 : x0 + 4]
            want = np.rint(
                np.repeat(rec.patch_after, 3, axis=2).astype(np.float64) * 255
            ) / 255
            np.testing.assert_allclose(cell, want.astype(np.float32), atol=1e-7)

    def test_attended_box_is_drawn_in_red(self, exported):
        traj, traj_dir = exported
        out = render_trajectory(traj_dir, traj_dir / "render.png")
        canvas = load_png(out)
        lay = grid_layout(8, 8, 4, 4, steps=2)
        rec = traj.records[0]
        top, left, bottom, right = patch_bounds(rec.loc, tiny_geometry())
        xi, yi = lay["x_image"], lay["y_state"]
        red = np.array(BOX_COLOR, np.float32)
        for row in (top, bottom - 1):
            if 0 <= row < 8:
                c0, c1 = max(left, 0), min(right, 8)
                np.testing.assert_array_equal(
                    canvas[yi + row, xi + c0 : xi + c1],
                    np.tile(red, (c1 - c0, 1)),
                )

    def test_gaps_keep_background_color(self, exported):
        _, traj_dir = exported
        canvas = load_png(render_trajectory(traj_dir, traj_dir / "r.png"))
        lay = grid_layout(8, 8, 4, 4, steps=2)
        gap_col = lay["cell_width"]  # first gap column
        np.testing.assert_array_equal(
            canvas[:, gap_col : gap_col + CELL_PAD],
            np.ones((lay["canvas_height"], CELL_PAD, 3), np.float32),
        )

    def test_missing_state_image_named(self, exported, tmp_path):
        _, traj_dir = exported
        (traj_dir / "state_01.png").unlink()
        with pytest.raises(DataError, match="state_01.png"):
            render_trajectory(traj_dir, tmp_path / "render.png")

    def test_missing_patch_image_named(self, exported, tmp_path):
        _, traj_dir = exported
        (traj_dir / "patch_after_02.png").unlink()
        with pytest.raises(DataError, match="patch_after_02.png"):
            render_trajectory(traj_dir, tmp_path / "render.png")

    def test_empty_manifest_rejected(self, tmp_path):
        traj_dir = tmp_path / "traj"
        traj_dir.mkdir()
        (traj_dir / "manifest.csv").write_text("step,x,y,log_prob\n")
        with pytest.raises(DataError, match="empty"):
            render_trajectory(traj_dir, tmp_path / "render.png")
