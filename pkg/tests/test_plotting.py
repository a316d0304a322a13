from pclora.accounting import preset_arch, rank_sweep
from pclora.plotting import plot_grid, plot_rank_sweep, plot_schedules, plot_training_log
from pclora.trainer import GridCell, GridResult, TrainLogRow

PNG = b"\x89PNG"


def test_schedule_figure(tmp_path):
    path = plot_schedules(60, 100, str(tmp_path / "sched.png"))
    assert open(path, "rb").read(4) == PNG


def test_rank_sweep_figure(tmp_path):
    path = plot_rank_sweep(rank_sweep(preset_arch("vit_b"), [32, 64, 128]), str(tmp_path / "sub" / "sweep.png"))
    assert open(path, "rb").read(4) == PNG


def test_training_log_figure(tmp_path):
    rows = [TrainLogRow(n, max(0.0, 1 - n / 5), 1.0 / (n + 1), 0.0 if n > 5 else 0.5, 0.3, 1e-2) for n in range(10)]
    path = plot_training_log(rows, str(tmp_path / "log.svg"))
    assert "<svg" in open(path).read(500)


def test_grid_figure_skips_failed_cells(tmp_path):
    cells = [GridCell("sine", 0.2, 0.9), GridCell("sine", 1.0, None, "boom")]
    path = plot_grid(GridResult("toy", [0.2, 1.0], ["sine"], cells), str(tmp_path / "grid.png"))
    assert open(path, "rb").read(4) == PNG
