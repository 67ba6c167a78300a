import math

import numpy as np
import pytest

from mzsim import components as comp
from mzsim import experiment as exp
from mzsim import hilbert, rng
from mzsim.experiment import (
    Detect,
    GeneralizedMeasure,
    Pipeline,
    PipelineError,
    ProjectiveMeasure,
    ZeroProbabilityEventError,
    conditional,
    delayed_choice_equivalence,
    marginal,
    matches,
    run_analytic,
    run_sampled,
    sweep,
    unitary_on,
)

WW_NAMES = {"x": "A", "y": "B"}


def baseline_pipeline(phi=None):
    space = comp.direction_space()
    stages = [unitary_on(comp.beam_splitter())]
    if phi is not None:
        stages.append(unitary_on(comp.phase_shifter(phi)))
    stages += [unitary_on(comp.mirror_pair()),
               unitary_on(comp.beam_splitter()), Detect()]
    return Pipeline(space, space.basis_state(("x",)), tuple(stages))


def readout_pipeline():
    space = comp.direction_space()
    stages = (unitary_on(comp.beam_splitter()),
              ProjectiveMeasure("direction", "ww", WW_NAMES),
              unitary_on(comp.mirror_pair()),
              unitary_on(comp.beam_splitter()), Detect())
    return Pipeline(space, space.basis_state(("x",)), stages)


def entangler_pipeline(phi=None):
    space = comp.tagged_space()
    stages = [unitary_on(comp.beam_splitter()),
              unitary_on(comp.which_way_entangler())]
    if phi is not None:
        stages.append(unitary_on(comp.phase_shifter(phi)))
    stages += [unitary_on(comp.mirror_pair()),
               unitary_on(comp.beam_splitter()), Detect()]
    return Pipeline(space, space.basis_state(("x", "vac", "e")), tuple(stages))


def eraser_pipeline(eta=1.0, phi=None, open_channel=True, eraser_before_exit=False):
    space = comp.eraser_space()
    stages = [unitary_on(comp.beam_splitter()),
              unitary_on(comp.which_way_entangler())]
    if phi is not None:
        stages.append(unitary_on(comp.phase_shifter(phi)))
    stages.append(unitary_on(comp.mirror_pair()))
    erase = GeneralizedMeasure(comp.eraser_kraus(eta), ("photon", "eraser"), "abs")
    if open_channel and eraser_before_exit:
        stages.append(erase)
    stages.append(unitary_on(comp.beam_splitter()))
    if open_channel and not eraser_before_exit:
        stages.append(erase)
    stages.append(Detect())
    return Pipeline(space, space.basis_state(("x", "vac", "e", "gamma")),
                    tuple(stages))


def table(dist):
    return {b.record: b.prob for b in dist.branches}


class TestRunAnalytic:
    def test_baseline_single_branch(self):
        dist = run_analytic(baseline_pipeline())
        assert len(dist.branches) == 1
        branch = dist.branches[0]
        assert branch.record == (("detector", "X"),)
        assert abs(branch.prob - 1.0) <= 1e-12
        assert abs(marginal(dist, matches(detector="Y"))) <= 1e-12

    def test_entangler_classical_split(self):
        dist = run_analytic(entangler_pipeline())
        assert abs(marginal(dist, matches(detector="X")) - 0.5) <= 1e-12
        assert abs(marginal(dist, matches(detector="Y")) - 0.5) <= 1e-12

    def test_readout_four_equal_branches(self):
        dist = run_analytic(readout_pipeline())
        probs = table(dist)
        assert len(probs) == 4
        for prob in probs.values():
            assert abs(prob - 0.25) <= 1e-12

    def test_eraser_branch_table(self):
        dist = run_analytic(eraser_pipeline(eta=1.0))
        probs = table(dist)
        assert set(probs) == {(("abs", "yes"), ("detector", "X")),
                              (("abs", "no"), ("detector", "Y"))}
        for prob in probs.values():
            assert abs(prob - 0.5) <= 1e-12

    def test_branch_states_are_normalized(self):
        for pipeline in (baseline_pipeline(), readout_pipeline(),
                         entangler_pipeline(), eraser_pipeline(0.5)):
            for branch in run_analytic(pipeline).branches:
                assert abs(branch.state.norm - 1.0) <= 1e-10

    @pytest.mark.parametrize("make", [
        baseline_pipeline, readout_pipeline, entangler_pipeline,
        lambda: eraser_pipeline(0.3), lambda: eraser_pipeline(1.0, phi=1.1),
    ])
    def test_probabilities_sum_to_one(self, make):
        dist = run_analytic(make())
        assert abs(sum(b.prob for b in dist.branches) - 1.0) <= 1e-10

    def test_global_phase_of_initial_state_is_irrelevant(self):
        base = eraser_pipeline(0.7)
        rotated = Pipeline(
            base.space,
            hilbert.StateVector(base.space, base.initial.amps * np.exp(1.23j)),
            base.stages)
        p1, p2 = table(run_analytic(base)), table(run_analytic(rotated))
        assert set(p1) == set(p2)
        for key in p1:
            assert abs(p1[key] - p2[key]) <= 1e-12

    def test_adjacent_disjoint_unitaries_commute(self):
        space = comp.tagged_space()
        gen = np.random.default_rng(31)
        q = np.linalg.qr(gen.normal(size=(2, 2)) + 1j * gen.normal(size=(2, 2)))[0]
        atom_twist = hilbert.LinearMap(space.restricted(["atom"]), q, unitary=True)
        a = unitary_on(comp.phase_shifter(0.9))
        b = exp.Unitary(atom_twist, ("atom",))
        head = [unitary_on(comp.beam_splitter()),
                unitary_on(comp.which_way_entangler())]
        tail = [unitary_on(comp.mirror_pair()),
                unitary_on(comp.beam_splitter()), Detect()]
        initial = space.basis_state(("x", "vac", "e"))
        d1 = run_analytic(Pipeline(space, initial, (*head, a, b, *tail)))
        d2 = run_analytic(Pipeline(space, initial, (*head, b, a, *tail)))
        t1, t2 = table(d1), table(d2)
        assert set(t1) == set(t2)
        for key in t1:
            assert abs(t1[key] - t2[key]) <= 1e-12


class TestConditionalAndMarginal:
    def test_conditioned_on_absorption(self):
        dist = run_analytic(eraser_pipeline(eta=1.0))
        assert abs(conditional(dist, matches(abs="yes"), matches(detector="X")) - 1.0) <= 1e-12
        assert abs(conditional(dist, matches(abs="yes"), matches(detector="Y"))) <= 1e-12
        assert abs(conditional(dist, matches(abs="no"), matches(detector="Y")) - 1.0) <= 1e-12

    @pytest.mark.parametrize("eta", [0.1, 0.5, 1.0])
    def test_no_signalling_marginal(self, eta):
        open_dist = run_analytic(eraser_pipeline(eta=eta))
        closed_dist = run_analytic(eraser_pipeline(eta=eta, open_channel=False))
        p_open = marginal(open_dist, matches(detector="X"))
        p_closed = marginal(closed_dist, matches(detector="X"))
        assert abs(p_open - 0.5) <= 1e-12
        assert abs(p_closed - 0.5) <= 1e-12
        assert abs(p_open - p_closed) <= 1e-12

    def test_trivial_predicate_sums_to_one(self):
        dist = run_analytic(eraser_pipeline(0.4))
        assert abs(marginal(dist, lambda record: True) - 1.0) <= 1e-10

    def test_zero_probability_condition_raises(self):
        dist = run_analytic(baseline_pipeline())
        with pytest.raises(ZeroProbabilityEventError):
            conditional(dist, matches(abs="yes"), matches(detector="X"))

    def test_law_of_total_probability(self):
        dist = run_analytic(eraser_pipeline(0.6))
        total = sum(
            conditional(dist, matches(abs=g), matches(detector="X"))
            * marginal(dist, matches(abs=g))
            for g in ("yes", "no"))
        assert abs(total - marginal(dist, matches(detector="X"))) <= 1e-12


def naive_run_sampled(pipeline, shots, seed):
    """Per-shot state-vector walk; independent of the tree sampler."""
    stage_ops = [(exp._record_key(s), exp._stage_operators(s, pipeline.space))
                 for s in pipeline.stages]
    counts = {}
    for shot in range(shots):
        sampler = rng.SubstreamSampler(seed, shot)
        amps = pipeline.initial.amps
        record = ()
        for key, ops in stage_ops:
            if key is None:
                amps = ops[0][1] @ amps
                continue
            weights = []
            for _, mat in ops:
                sub = mat @ amps
                weights.append(float(np.real(np.vdot(sub, sub))))
            cum = np.cumsum(weights)
            u = sampler.next_unit()
            picked = int(np.searchsorted(cum, u, side="right"))
            picked = min(picked, max(j for j, w in enumerate(weights) if w > 0.0))
            sub = ops[picked][1] @ amps
            amps = sub / math.sqrt(weights[picked])
            record += ((key, ops[picked][0]),)
        counts[record] = counts.get(record, 0) + 1
    return dict(sorted(counts.items()))


class TestRunSampled:
    def test_baseline_lands_entirely_in_x(self):
        for seed in (0, 1, 99):
            hist = run_sampled(baseline_pipeline(), 200, seed)
            assert hist.counts == {(("detector", "X"),): 200}

    def test_identical_seed_identical_histogram(self):
        p = eraser_pipeline(0.5)
        a, b = run_sampled(p, 500, 42), run_sampled(p, 500, 42)
        assert a.counts == b.counts
        assert run_sampled(p, 1, 7).counts == run_sampled(p, 1, 7).counts

    def test_different_seeds_differ(self):
        p = entangler_pipeline()
        assert run_sampled(p, 500, 1).counts != run_sampled(p, 500, 2).counts

    def test_entangler_frequency_within_binomial_bound(self):
        hist = run_sampled(entangler_pipeline(), 100_000, 7)
        freq = hist.frequency((("detector", "X"),))
        assert abs(freq - 0.5) <= 5.0 * math.sqrt(0.25 / 100_000)

    def test_matches_naive_per_shot_walk(self):
        for make in (readout_pipeline, lambda: eraser_pipeline(0.5)):
            p = make()
            assert run_sampled(p, 400, 11).counts == naive_run_sampled(p, 400, 11)

    def test_counts_sum_to_shots(self):
        hist = run_sampled(eraser_pipeline(0.5), 1234, 3)
        assert sum(hist.counts.values()) == 1234

    def test_shots_must_be_positive(self):
        with pytest.raises(ValueError):
            run_sampled(baseline_pipeline(), 0, 1)

    def test_frequencies_converge_over_seeds(self):
        # 5-sigma binomial bounds per (seed, branch); at most one excursion.
        p = eraser_pipeline(0.5)
        expected = table(run_analytic(p))
        shots = 100_000
        excursions = 0
        for seed in range(10):
            hist = run_sampled(p, shots, seed)
            for record, prob in expected.items():
                bound = 5.0 * math.sqrt(prob * (1.0 - prob) / shots)
                if abs(hist.frequency(record) - prob) > bound:
                    excursions += 1
        assert excursions <= 1


class TestSweep:
    def test_bare_interferometer_has_full_visibility(self):
        grid = [k * 2.0 * math.pi / 64 for k in range(64)]
        result = sweep(baseline_pipeline, "phi", grid)
        assert abs(result.visibility - 1.0) <= 1e-10
        for point in result.points:
            assert abs(point.prob_x - math.cos(point.value / 2.0) ** 2) <= 1e-12

    def test_tagged_interferometer_has_no_fringes(self):
        grid = [k * 2.0 * math.pi / 64 for k in range(64)]
        result = sweep(entangler_pipeline, "phi", grid)
        assert abs(result.visibility) <= 1e-10
        for point in result.points:
            assert abs(point.prob_x - 0.5) <= 1e-12

    def test_conditioned_eraser_restores_fringes(self):
        grid = [k * 2.0 * math.pi / 64 for k in range(64)]
        result = sweep(lambda v: eraser_pipeline(1.0, phi=v), "phi", grid,
                       given=matches(abs="yes"))
        assert abs(result.visibility - 1.0) <= 1e-10

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            sweep(baseline_pipeline, "phi", [])

    def test_non_finite_grid_rejected(self):
        with pytest.raises(ValueError):
            sweep(baseline_pipeline, "phi", [0.0, math.nan])

    def test_visibility_zero_over_zero_is_zero(self):
        assert exp.visibility([0.0, 0.0]) == 0.0


class TestDelayedChoice:
    def test_eraser_after_detection_changes_nothing(self):
        assert delayed_choice_equivalence(eraser_pipeline(1.0))
        assert delayed_choice_equivalence(eraser_pipeline(0.3))

    def test_eraser_before_exit_splitter_changes_nothing(self):
        assert delayed_choice_equivalence(eraser_pipeline(1.0, eraser_before_exit=True))

    def test_requires_a_kraus_stage(self):
        with pytest.raises(PipelineError):
            delayed_choice_equivalence(entangler_pipeline())


class TestPipelineValidation:
    def test_detect_must_be_last(self):
        space = comp.direction_space()
        with pytest.raises(PipelineError, match="final"):
            Pipeline(space, space.basis_state(("x",)),
                     (Detect(), unitary_on(comp.beam_splitter())))

    def test_detect_required(self):
        space = comp.direction_space()
        with pytest.raises(PipelineError, match="detect"):
            Pipeline(space, space.basis_state(("x",)),
                     (unitary_on(comp.beam_splitter()),))

    def test_duplicate_record_keys_rejected(self):
        space = comp.direction_space()
        with pytest.raises(PipelineError, match="unique"):
            Pipeline(space, space.basis_state(("x",)),
                     (ProjectiveMeasure("direction", "detector", None), Detect()))

    def test_mismatched_targets_rejected(self):
        space = comp.direction_space()
        with pytest.raises(PipelineError):
            Pipeline(space, space.basis_state(("x",)),
                     (exp.Unitary(comp.beam_splitter(), ("photon",)), Detect()))

    def test_initial_state_space_must_match(self):
        space = comp.direction_space()
        other = comp.tagged_space()
        with pytest.raises(PipelineError):
            Pipeline(space, other.basis_state(("x", "vac", "e")), (Detect(),))
