import numpy as np
import pytest

from compress import count_params, equivalence_check, prune_report, strip_and_rewire, total_params
from harness.checkpoint import load_checkpoint
from harness.config import DatasetConfig, RunConfig
from harness.dataset import iterate_batches, synth_dataset
from harness.metrics import read_metrics
from harness.sampling import generate
from models import build_discriminator, build_generator
from objectives import ClassCondNormParams
from training import OptimState, TrainConfig, TrainingDivergedError, TrainState, teacher_train, train_loop, train_step


def dataset_for(run):
    ds = run.dataset
    return synth_dataset(ds.seed, ds.num_classes, ds.image_size, ds.n_per_class)


def teacher_for(run, seed=11):
    return build_generator(run.teacher_generator(), seed=seed, dtype=np.float64)


def snapshot(model):
    return {name: value.copy() for name, value in model.state_dict().items()}


def step_setup(run):
    cfg = run.train
    student = build_generator(run.generator, seed=0, dtype=np.float64)
    disc = build_discriminator(run.discriminator, seed=1, dtype=np.float64)
    teacher = teacher_for(run).eval()
    norms = ClassCondNormParams([teacher.cfg.blocks[k].out_ch for k in cfg.distill_blocks],
                                run.generator.num_classes, dtype=np.float64)
    states = TrainState(np.random.default_rng(0), OptimState(), OptimState(), norms, lr=cfg.base_lr)
    batch = next(iterate_batches(dataset_for(run), cfg.batch_size * cfg.grad_accum_steps, 1,
                                 np.random.default_rng(0), np.float64))
    return student, teacher, disc, batch, states


class TestTrainStep:
    def test_losses_are_reported(self, tiny_run):
        student, teacher, disc, batch, states = step_setup(tiny_run)
        bundle = train_step(student, teacher, disc, batch, tiny_run.train, states)
        assert bundle.is_finite()
        assert bundle.l_pp > 0 and bundle.l_cd > 0
        assert bundle.total_g == pytest.approx(0.01 * bundle.l_pp + bundle.l_cd + bundle.l_adv_g)
        assert states.g_opt.step == 1 and states.d_opt.step == 1

    def test_teacher_is_untouched(self, tiny_run):
        student, teacher, disc, batch, states = step_setup(tiny_run)
        before = snapshot(teacher)
        train_step(student, teacher, disc, batch, tiny_run.train, states)
        for name, value in teacher.state_dict().items():
            np.testing.assert_array_equal(value, before[name])

    def test_mask_crossing_threshold_freezes(self, tiny_run):
        student, teacher, disc, batch, states = step_setup(tiny_run)
        mask = student.blocks[2].mask1
        values = np.full(mask.n, 0.9)
        values[: int(0.8 * mask.n)] = 1e-4
        mask.set_soft_values(values)
        train_step(student, teacher, disc, batch, tiny_run.train, states)
        assert mask.frozen
        assert set(np.unique(mask.m_star.data)) <= {0.0, 1.0}
        assert mask.m_star.data.sum() == mask.n - int(0.8 * mask.n)
        assert sum(m.frozen for m in student.masks()) == 1

    def test_no_pp_keeps_masks_fixed(self, tiny_run):
        run = tiny_run.with_overrides(ablation="no_pp")
        student, teacher, disc, batch, states = step_setup(run)
        bundle = train_step(student, teacher, disc, batch, run.train, states)
        assert bundle.l_pp == 0.0
        for m in student.masks():
            np.testing.assert_array_equal(m.weight.data, np.full(m.n, 0.01))

    def test_no_cd_still_prunes(self, tiny_run):
        run = tiny_run.with_overrides(ablation="no_cd")
        student, _, disc, batch, states = step_setup(run)
        mask = student.blocks[2].mask1
        values = np.full(mask.n, 0.9)
        values[: int(0.8 * mask.n)] = 1e-4
        mask.set_soft_values(values)
        bundle = train_step(student, None, disc, batch, run.train, states)
        assert bundle.l_pp > 0 and bundle.l_cd == 0.0
        assert mask.frozen

    def test_distillation_needs_teacher(self, tiny_run):
        student, _, disc, batch, states = step_setup(tiny_run)
        with pytest.raises(ValueError):
            train_step(student, None, disc, batch, tiny_run.train, states)

    def test_non_finite_loss_is_reported(self, tiny_run):
        student, teacher, disc, batch, states = step_setup(tiny_run)
        disc.head.bias.data = np.array([np.nan])
        with pytest.raises(TrainingDivergedError, match="no checkpoint written yet"):
            train_step(student, teacher, disc, batch, tiny_run.train, states)


@pytest.mark.slow
class TestTrainLoop:
    @pytest.mark.parametrize("ablation", ["full", "no_pp", "no_cd", "two_step"])
    def test_smoke(self, tiny_run, tmp_path, ablation):
        run = tiny_run.with_overrides(ablation=ablation)
        teacher = teacher_for(run) if run.train.uses_cd else None
        result = train_loop(run, dataset_for(run), tmp_path, teacher=teacher)
        rows = read_metrics(result.metrics)
        assert len(rows) == run.train.epochs * run.train.steps_per_epoch
        assert all(np.isfinite(v) for row in rows for v in row.values())
        assert (tmp_path / "student.ppcd").exists()
        assert (tmp_path / "checkpoints" / "epoch_001.ppcd").exists()
        assert (tmp_path / "samples" / "epoch_000.png").exists()
        assert len((tmp_path / "masks.csv").read_text().splitlines()) == 1 + 2 * 10
        if ablation == "no_pp":
            assert all(row["l_pp"] == 0 and row["frozen_masks"] == 0 for row in rows)
        if ablation == "no_cd":
            assert all(row["l_cd"] == 0 and row["l_pp"] > 0 for row in rows)

    def test_two_step_phases(self, tiny_run, tmp_path):
        run = tiny_run.with_overrides(ablation="two_step")
        result = train_loop(run, dataset_for(run), tmp_path, teacher=teacher_for(run))
        rows = read_metrics(result.metrics)
        first = [r for r in rows if r["epoch"] == 0]
        second = [r for r in rows if r["epoch"] == 1]
        assert all(r["l_cd"] == 0 and r["l_pp"] > 0 for r in first)
        assert all(r["l_cd"] > 0 and r["l_pp"] == 0 for r in second)
        assert result.state.phase == "distill"

    def test_same_seed_same_metrics(self, tiny_run, tmp_path):
        logs = []
        for name in ("a", "b"):
            result = train_loop(tiny_run, dataset_for(tiny_run), tmp_path / name, teacher=teacher_for(tiny_run))
            logs.append(result.metrics.read_text())
        assert logs[0] == logs[1]

    def test_teacher_immutable_over_run(self, tiny_run, tmp_path):
        teacher = teacher_for(tiny_run)
        before = snapshot(teacher)
        train_loop(tiny_run, dataset_for(tiny_run), tmp_path, teacher=teacher)
        for name, value in teacher.state_dict().items():
            np.testing.assert_array_equal(value, before[name])

    def test_frozen_set_only_grows(self, tiny_run, tmp_path):
        run = tiny_run.with_overrides(epochs=3)
        train_loop(run, dataset_for(run), tmp_path, teacher=teacher_for(run))
        rows = read_metrics(tmp_path / "metrics.csv")
        counts = [r["frozen_masks"] for r in rows]
        assert counts == sorted(counts)

    def test_distillation_loss_halves(self, tiny_run, tmp_path):
        train = tiny_run.train.model_copy(update={"epochs": 2, "steps_per_epoch": 100, "base_lr": 1e-3})
        run = tiny_run.model_copy(update={"train": train})
        result = train_loop(run, dataset_for(run), tmp_path, teacher=teacher_for(run))
        l_cd = [row["l_cd"] for row in read_metrics(result.metrics)]
        assert len(l_cd) == 200
        assert np.mean(l_cd[-20:]) <= 0.5 * np.mean(l_cd[:100])

    def test_missing_teacher(self, tiny_run, tmp_path):
        with pytest.raises(ValueError, match="teacher"):
            train_loop(tiny_run, dataset_for(tiny_run), tmp_path)

    def test_teacher_train(self, tiny_run, tmp_path):
        run = tiny_run.with_overrides(epochs=1)
        result = teacher_train(run, dataset_for(run), tmp_path)
        teacher, meta = load_checkpoint(result.checkpoint)
        assert result.checkpoint.name == "teacher.ppcd"
        assert teacher.masks() == []
        assert teacher.cfg.blocks[0].out_ch == 2 * run.generator.blocks[0].out_ch
        k = run.generator.num_classes
        z = np.random.default_rng(0).standard_normal((4 * k, run.generator.z_dim))
        labels = np.repeat(np.arange(k), 4)
        images = generate(teacher, z, labels)
        means = [images[labels == c].mean(axis=0) for c in range(k)]
        assert np.linalg.norm(means[0] - means[1]) > 0


@pytest.fixture
def toy_run():
    """32x32 images, 8 classes, width 32, five blocks: the default model at toy batch sizes."""
    return RunConfig(
        train=TrainConfig(batch_size=2, grad_accum_steps=2, dtype="float32", seed=7),
        dataset=DatasetConfig(n_per_class=4, seed=3),
    )


def prune_until_frozen(run, max_steps=60):
    """Drive train_step with a dominant push penalty until every mask is binarized.

    Mask weights start evenly spread around the pivot, so channels cross it in
    order and the freeze point depends on alpha.
    """
    cfg = run.train.model_copy(update={"pp_weight": 1e6, "base_lr": 1e-3})
    dtype = np.dtype(cfg.dtype)
    student = build_generator(run.generator, seed=0, dtype=dtype)
    disc = build_discriminator(run.discriminator, seed=1, dtype=dtype)
    teacher, norms = None, None
    if cfg.uses_cd:
        teacher = build_generator(run.teacher_generator(), seed=11, dtype=dtype).eval()
        norms = ClassCondNormParams([teacher.cfg.blocks[k].out_ch for k in cfg.distill_blocks],
                                    run.generator.num_classes, dtype=dtype)
    for m in student.masks():
        m.weight.data = np.linspace(-0.004, 0.016, m.n).astype(dtype)
    states = TrainState(np.random.default_rng(0), OptimState(), OptimState(), norms, lr=cfg.base_lr)
    batches = iterate_batches(dataset_for(run), cfg.batch_size * cfg.grad_accum_steps, max_steps,
                              np.random.default_rng(0), dtype)
    for batch in batches:
        train_step(student, teacher, disc, batch, cfg, states)
        if all(m.frozen for m in student.masks()):
            break
    return student


@pytest.mark.slow
class TestPruneToExport:
    def test_alpha_run_exports_smaller_equivalent_generator(self, toy_run):
        student = prune_until_frozen(toy_run.with_overrides(alpha=0.7))
        assert all(m.frozen for m in student.masks())
        assert all(m.zero_fraction() >= 0.7 for m in student.masks())
        pruned = strip_and_rewire(student)
        assert equivalence_check(student, pruned, trials=100, tol=1e-5).passed
        report = prune_report(student, pruned)
        assert report.block_reduction() >= 0.6
        assert report.params_after < report.params_before
        assert sum(count_params(pruned).values()) == total_params(pruned)
        assert sum(count_params(student).values()) == total_params(student)

    def test_higher_alpha_never_grows_the_export(self, toy_run):
        sizes = []
        for alpha in (0.5, 0.6, 0.7, 0.8):
            student = prune_until_frozen(toy_run.with_overrides(alpha=alpha, ablation="no_cd"))
            assert all(m.frozen for m in student.masks())
            sizes.append(total_params(strip_and_rewire(student)))
        assert all(b <= a for a, b in zip(sizes, sizes[1:])), sizes
        assert sizes[0] > sizes[-1]
