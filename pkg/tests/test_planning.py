"""Latent-space procedure planning: targets, trajectories, ranking."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from craniokit.mesh import CANONICAL_ATTRIBUTE_NAMES
from craniokit.planning import (HealthyReference, PlanningError,
                                PlanningSession, Procedure, TARGET_KEYS,
                                builtin_procedures, healthy_reference,
                                interpolate, load_procedures, rank_procedures,
                                resolve_target, save_procedures, targets,
                                trajectory_latents)
from craniokit.sdvae import ATTRIBUTE_COUNT, ATTRIBUTE_DIM, LATENT_DIM, attribute_slice


def make_ref(rng, offset=0.0) -> HealthyReference:
    cloud = rng.normal(loc=offset, scale=1.5, size=(40, LATENT_DIM))
    return HealthyReference(mean=cloud.mean(axis=0), latents=cloud)


class TestProcedure:
    def test_attributes_sorted_and_deduped(self):
        p = Procedure("x", (7, 2, 2, 11))
        assert p.attributes == (2, 7, 11)

    def test_attribute_names_follow_canonical_order(self):
        p = Procedure("x", (3, 0))
        assert p.attribute_names == (CANONICAL_ATTRIBUTE_NAMES[0],
                                     CANONICAL_ATTRIBUTE_NAMES[3])

    def test_empty_rejected(self):
        with pytest.raises(PlanningError):
            Procedure("x", ())

    def test_out_of_range_rejected(self):
        with pytest.raises(PlanningError):
            Procedure("x", (15,))
        with pytest.raises(PlanningError):
            Procedure("x", (-1,))

    def test_unnamed_rejected(self):
        with pytest.raises(PlanningError):
            Procedure("", (1,))


class TestRegistry:
    def test_six_builtins(self):
        procs = builtin_procedures()
        assert len(procs) == 6
        by_name = {p.name: p for p in procs}
        assert set(by_name["Le Fort II"].attribute_names) == {
            "nose", "upper_lip", "nasolabial"}
        assert "orbits" in by_name["FOAR"].attribute_names

    def test_roundtrip(self, tmp_path):
        procs = builtin_procedures()
        path = tmp_path / "registry.json"
        save_procedures(procs, path)
        back = load_procedures(path)
        assert back == procs

    def test_registry_is_editable(self, tmp_path):
        path = tmp_path / "registry.json"
        path.write_text('{"procedures": [{"name": "custom", '
                        '"attributes": ["chin", "orbits"]}]}')
        (proc,) = load_procedures(path)
        assert proc.name == "custom"
        assert set(proc.attribute_names) == {"chin", "orbits"}

    def test_unknown_attribute_name(self, tmp_path):
        path = tmp_path / "registry.json"
        path.write_text('{"procedures": [{"name": "x", "attributes": ["femur"]}]}')
        with pytest.raises(PlanningError):
            load_procedures(path)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "registry.json"
        path.write_text("not json")
        with pytest.raises(PlanningError):
            load_procedures(path)
        with pytest.raises(PlanningError):
            load_procedures(tmp_path / "missing.json")


class TestReference:
    def test_mean_over_healthy_rows_only(self, rng):
        z = rng.normal(size=(10, LATENT_DIM))
        labels = np.array(["Healthy"] * 4 + ["Apert"] * 6)
        ref = healthy_reference(z, labels)
        np.testing.assert_array_equal(ref.mean, z[:4].mean(axis=0))
        assert ref.latents.shape == (4, LATENT_DIM)

    def test_no_healthy_subjects(self, rng):
        z = rng.normal(size=(5, LATENT_DIM))
        with pytest.raises(PlanningError):
            healthy_reference(z, np.array(["Apert"] * 5))

    def test_shape_mismatch(self, rng):
        with pytest.raises(PlanningError):
            healthy_reference(rng.normal(size=(5, LATENT_DIM)),
                              np.array(["Healthy"] * 4))


class TestTargets:
    def test_stops_collinear_with_patient_line(self, rng):
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=4.0, size=LATENT_DIM)
        tg = targets(ref, z_p)
        u = tg.direction
        assert np.linalg.norm(u) == pytest.approx(1.0, abs=1e-12)
        for stop in (tg.sigma1, tg.sigma2, tg.sigma3):
            gap = stop - tg.mean
            # residual orthogonal to the line vanishes
            resid = gap - (gap @ u) * u
            assert np.linalg.norm(resid) < 1e-10

    def test_spacing_is_k_sigma(self, rng):
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=4.0, size=LATENT_DIM)
        tg = targets(ref, z_p)
        for k, stop in enumerate((tg.sigma1, tg.sigma2, tg.sigma3), start=1):
            assert np.linalg.norm(stop - tg.mean) == pytest.approx(
                k * tg.sigma_dir, rel=1e-12)

    def test_sigma_dir_is_projected_std(self, rng):
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=4.0, size=LATENT_DIM)
        tg = targets(ref, z_p)
        u = (z_p - ref.mean) / np.linalg.norm(z_p - ref.mean)
        assert tg.sigma_dir == pytest.approx(float(np.std(ref.latents @ u)))

    def test_stops_point_toward_patient(self, rng):
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=4.0, size=LATENT_DIM)
        tg = targets(ref, z_p)
        assert (tg.sigma1 - tg.mean) @ (z_p - tg.mean) > 0

    def test_patient_at_mean_rejected(self, rng):
        ref = make_ref(rng)
        with pytest.raises(PlanningError):
            targets(ref, ref.mean.copy())


class TestSession:
    def proc(self):
        return Procedure("x", (2, 5))

    def test_valid_session(self, rng):
        s = PlanningSession("p1", rng.normal(size=LATENT_DIM), self.proc(),
                            stops={2: 0.5}, target="2sigma", t=0.25)
        assert s.stops == {2: 0.5} and s.t == 0.25

    def test_bad_latent_size(self):
        with pytest.raises(PlanningError):
            PlanningSession("p1", np.zeros(10), self.proc())

    def test_stop_for_unmoved_region(self):
        with pytest.raises(PlanningError):
            PlanningSession("p1", np.zeros(LATENT_DIM), self.proc(),
                            stops={3: 0.5})

    def test_stop_fraction_out_of_range(self):
        with pytest.raises(PlanningError):
            PlanningSession("p1", np.zeros(LATENT_DIM), self.proc(),
                            stops={2: 1.5})

    def test_t_out_of_range(self):
        with pytest.raises(PlanningError):
            PlanningSession("p1", np.zeros(LATENT_DIM), self.proc(), t=-0.1)

    def test_unknown_target_key(self):
        with pytest.raises(PlanningError):
            PlanningSession("p1", np.zeros(LATENT_DIM), self.proc(),
                            target="4sigma")

    def test_custom_target_vector(self, rng):
        tgt = rng.normal(size=LATENT_DIM)
        s = PlanningSession("p1", np.zeros(LATENT_DIM), self.proc(), target=tgt)
        np.testing.assert_array_equal(s.target, tgt)
        with pytest.raises(PlanningError):
            PlanningSession("p1", np.zeros(LATENT_DIM), self.proc(),
                            target=np.zeros(3))

    def test_with_controls_replaces_only_given(self, rng):
        s = PlanningSession("p1", rng.normal(size=LATENT_DIM), self.proc(),
                            stops={2: 0.5}, t=0.25)
        s2 = s.with_controls(t=0.75)
        assert s2.t == 0.75 and s2.stops == {2: 0.5}
        assert s.t == 0.25


class TestTrajectory:
    def setup_case(self, rng, stops=None, target="mu"):
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=4.0, size=LATENT_DIM)
        proc = Procedure("x", (1, 4, 9))
        session = PlanningSession("p1", z_p, proc, stops=stops or {},
                                  target=target)
        return ref, session

    def test_first_step_is_patient_bitwise(self, rng):
        ref, s = self.setup_case(rng)
        zs = trajectory_latents(s, ref, steps=5)
        assert zs.shape == (5, LATENT_DIM)
        np.testing.assert_array_equal(zs[0], s.latent)

    def test_last_step_hits_target_on_moved_subsets(self, rng):
        ref, s = self.setup_case(rng)
        zs = trajectory_latents(s, ref, steps=5)
        tgt = resolve_target(s, ref)
        for k in s.procedure.attributes:
            np.testing.assert_allclose(zs[-1, attribute_slice(k)],
                                       tgt[attribute_slice(k)], atol=1e-12)

    def test_frozen_subsets_bitwise_constant(self, rng):
        ref, s = self.setup_case(rng)
        zs = trajectory_latents(s, ref, steps=7)
        moved = set(s.procedure.attributes)
        for k in range(ATTRIBUTE_COUNT):
            if k in moved:
                continue
            sl = attribute_slice(k)
            for row in zs:
                np.testing.assert_array_equal(row[sl], s.latent[sl])

    def test_steps_collinear_per_subset(self, rng):
        ref, s = self.setup_case(rng)
        zs = trajectory_latents(s, ref, steps=6)
        sl = attribute_slice(1)
        seg = zs[:, sl] - zs[0, sl]
        direction = seg[-1] / np.linalg.norm(seg[-1])
        for row in seg[1:]:
            resid = row - (row @ direction) * direction
            assert np.linalg.norm(resid) < 1e-10

    def test_stop_fraction_shortens_path(self, rng):
        ref, s = self.setup_case(rng, stops={4: 0.5})
        zs = trajectory_latents(s, ref, steps=3)
        tgt = resolve_target(s, ref)
        sl = attribute_slice(4)
        want = 0.5 * s.latent[sl] + 0.5 * tgt[sl]
        np.testing.assert_allclose(zs[-1, sl], want, atol=1e-12)
        # zero fraction freezes the subset entirely
        ref2, s2 = self.setup_case(rng, stops={4: 0.0})
        zs2 = trajectory_latents(s2, ref2, steps=3)
        np.testing.assert_array_equal(zs2[-1, sl], s2.latent[sl])

    def test_single_step_is_patient(self, rng):
        ref, s = self.setup_case(rng)
        zs = trajectory_latents(s, ref, steps=1)
        np.testing.assert_array_equal(zs, s.latent[None])

    def test_zero_steps_rejected(self, rng):
        ref, s = self.setup_case(rng)
        with pytest.raises(PlanningError):
            trajectory_latents(s, ref, steps=0)

    def test_custom_target_used_verbatim(self, rng):
        tgt = rng.normal(size=LATENT_DIM)
        ref, _ = self.setup_case(rng)
        s = PlanningSession("p1", ref.mean + 1.0, Procedure("x", (0,)),
                            target=tgt)
        assert resolve_target(s, ref) is s.target
        zs = trajectory_latents(s, ref, steps=2)
        np.testing.assert_allclose(zs[-1, attribute_slice(0)],
                                   tgt[attribute_slice(0)], atol=1e-12)

    def test_sigma_target_key_resolves(self, rng):
        ref, s = self.setup_case(rng, target="3sigma")
        want = targets(ref, s.latent).sigma3
        np.testing.assert_array_equal(resolve_target(s, ref), want)


class TestInterpolate:
    def test_decoded_steps(self, rng, micro_model):
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=2.0, size=LATENT_DIM)
        s = PlanningSession("p1", z_p, Procedure("x", (0, 1)))
        steps = interpolate(s, ref, steps=4, model=micro_model)
        assert len(steps) == 4
        np.testing.assert_allclose([st.t for st in steps],
                                   [0.0, 1 / 3, 2 / 3, 1.0])
        topo = micro_model.hierarchy.levels[0].topology
        assert steps[0].mesh.topology is topo
        # step 0 is the decoded patient, so its displacement field is zero
        np.testing.assert_array_equal(steps[0].displacement.magnitudes,
                                      np.zeros(topo.vertex_count))
        assert steps[-1].displacement.magnitudes.max() >= 0.0


class TestRanking:
    def test_sorted_ascending_by_d_mu(self, rng):
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=4.0, size=LATENT_DIM)
        rows = rank_procedures(builtin_procedures(), z_p, ref)
        d = [r.d_mu for r in rows]
        assert d == sorted(d)

    def test_full_coverage_reaches_mean(self, rng):
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=4.0, size=LATENT_DIM)
        everything = Procedure("all", tuple(range(ATTRIBUTE_COUNT)))
        (row,) = rank_procedures([everything], z_p, ref)
        assert row.d_mu == 0.0

    def test_d_mu_closed_form(self, rng):
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=4.0, size=LATENT_DIM)
        proc = Procedure("x", (2, 6))
        (row,) = rank_procedures([proc], z_p, ref)
        resid = z_p - ref.mean
        for k in proc.attributes:
            resid[attribute_slice(k)] = 0.0
        assert row.d_mu == pytest.approx(np.linalg.norm(resid), rel=1e-12)

    def test_sigma_distances_increase_with_k(self, rng):
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=4.0, size=LATENT_DIM)
        for row in rank_procedures(builtin_procedures(), z_p, ref):
            d = row.distances()
            assert d[0] <= d[1] <= d[2] <= d[3]

    @given(st.integers(0, 10 ** 6))
    @settings(max_examples=40, deadline=None)
    def test_superset_never_ranks_worse(self, seed):
        rng = np.random.default_rng(seed)
        ref = make_ref(rng)
        z_p = ref.mean + rng.normal(scale=4.0, size=LATENT_DIM)
        base = tuple(sorted(rng.choice(ATTRIBUTE_COUNT, size=3, replace=False)))
        extra = int(rng.integers(ATTRIBUTE_COUNT))
        small = Procedure("small", base)
        big = Procedure("big", base + (extra,))
        (r_small,) = rank_procedures([small], z_p, ref)
        (r_big,) = rank_procedures([big], z_p, ref)
        assert r_big.d_mu <= r_small.d_mu + 1e-12

    def test_target_keys_order(self):
        assert TARGET_KEYS == ("mu", "1sigma", "2sigma", "3sigma")
