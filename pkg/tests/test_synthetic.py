"""Synthetic cohort generation: template, class factors, determinism."""

from __future__ import annotations

import numpy as np
import pytest

from craniokit.cohort import CohortError, class_counts
from craniokit.mesh import (displacement, load_mesh, region_mean_displacement,
                            CorrespondedMesh)
from craniokit.synthetic import (SyntheticFactorSpec, build_template,
                                 default_factor_spec,
                                 generate_synthetic_cohort,
                                 region_mode_fields, save_factors,
                                 subject_positions, vertex_normals)


@pytest.fixture(scope="module")
def cohort(tmp_path_factory, template):
    out = tmp_path_factory.mktemp("cohort")
    spec = default_factor_spec()
    counts = {"Healthy": 6, "Apert": 4, "Crouzon": 4, "Muenke": 3}
    return generate_synthetic_cohort(spec, counts, out, seed=1,
                                     template=template), out


class TestTemplate:
    def test_vertex_scale(self):
        t = build_template(subdivisions=2)
        assert t.topology.vertex_count == 66
        t4 = build_template(subdivisions=4)
        assert 900 <= t4.topology.vertex_count <= 1100  # the "~1000" scale

    def test_masks_partition(self, template):
        total = sum(m.size for m in template.topology.attribute_masks)
        assert total == template.topology.vertex_count
        assert all(m.size > 0 for m in template.topology.attribute_masks)

    def test_head_scale_mm(self, template):
        radii = np.linalg.norm(template.positions, axis=1)
        assert 60.0 < radii.min() and radii.max() < 120.0

    def test_deterministic(self):
        a = build_template(subdivisions=2)
        b = build_template(subdivisions=2)
        assert np.array_equal(a.positions, b.positions)
        assert a.topology.topology_hash == b.topology.topology_hash


class TestCohort:
    def test_counts(self, cohort):
        c, _ = cohort
        assert class_counts(c.records) == {"Healthy": 6, "Apert": 4,
                                           "Crouzon": 4, "Muenke": 3}

    def test_meshes_on_template_topology(self, cohort, template):
        c, out = cohort
        for rec in c.records[:5]:
            mesh = load_mesh(out / rec.mesh_path, template.topology)
            assert mesh.positions.shape == template.positions.shape

    def test_factor_separation(self, cohort, template):
        # class mean factor in the discriminative region tracks the spec levels
        c, _ = cohort
        spec = default_factor_spec()
        k = template.topology.attribute_names.index("orbits")
        for label, want in spec.class_amplitudes.items():
            rows = [c.factors[r.id][k, 0] for r in c.records
                    if r.class_label == label]
            assert abs(np.mean(rows) - want[k]) < 2.0

    def test_nondiscriminative_regions_share_mean(self, cohort, template):
        c, _ = cohort
        spec = default_factor_spec()
        k = template.topology.attribute_names.index("orbits")
        amp = np.stack(list(spec.class_amplitudes.values()))
        other = [j for j in range(15) if j != k]
        assert np.ptp(amp[:, other], axis=0).max() == 0.0
        assert np.ptp(amp[:, k]) > 0.0

    def test_determinism(self, tmp_path, template):
        spec = default_factor_spec()
        counts = {"Healthy": 3, "Apert": 3, "Crouzon": 3, "Muenke": 3}
        a = generate_synthetic_cohort(spec, counts, tmp_path / "a", seed=2,
                                      template=template)
        b = generate_synthetic_cohort(spec, counts, tmp_path / "b", seed=2,
                                      template=template)
        assert a.records == b.records
        for rec in a.records:
            assert np.array_equal(a.factors[rec.id], b.factors[rec.id])
        one = (tmp_path / "a" / a.records[0].mesh_path).read_bytes()
        two = (tmp_path / "b" / b.records[0].mesh_path).read_bytes()
        assert one == two

    def test_ages_cover_both_groups(self, cohort):
        c, _ = cohort
        ages = np.array([r.age for r in c.records])
        assert (ages < 4.0).any() and (ages >= 4.0).any()
        assert ages.min() >= 0.0 and ages.max() <= 20.0

    def test_sex_balanced(self, cohort):
        c, _ = cohort
        sexes = [r.sex for r in c.records if r.class_label == "Healthy"]
        assert sexes.count("M") == 3 and sexes.count("F") == 3

    def test_invalid_counts_rejected(self, tmp_path, template):
        with pytest.raises(CohortError):
            generate_synthetic_cohort(default_factor_spec(), {"Healthy": 0},
                                      tmp_path, template=template)
        with pytest.raises(CohortError):
            generate_synthetic_cohort(default_factor_spec(), {"Klingon": 3},
                                      tmp_path, template=template)

    def test_save_factors(self, cohort, tmp_path):
        c, _ = cohort
        save_factors(c, tmp_path / "factors.csv")
        lines = (tmp_path / "factors.csv").read_text().splitlines()
        assert len(lines) == len(c.records) + 1
        assert lines[0].startswith("id,scale,")
        spec = default_factor_spec()
        assert len(lines[0].split(",")) == 2 + 15 * spec.modes_per_region


class TestDeformationFields:
    def test_zero_noise_gives_scaled_template(self, tmp_path, template):
        spec = SyntheticFactorSpec(
            class_amplitudes={"Healthy": np.zeros(15)}, subject_noise=0.0)
        c = generate_synthetic_cohort(spec, {"Healthy": 2}, tmp_path,
                                      template=template)
        for rec in c.records:
            mesh = load_mesh(tmp_path / rec.mesh_path, template.topology)
            want = c.scales[rec.id] * template.positions
            assert np.abs(mesh.positions - want).max() < 1e-6

    def test_each_factor_moves_only_its_region(self, template):
        spec = default_factor_spec()
        modes = spec.modes_per_region
        fields = region_mode_fields(template, spec.blend_mm, modes)
        base = region_mode_fields(template, spec.blend_mm, 1)
        normals = vertex_normals(template.positions, template.topology.faces)
        rng = np.random.default_rng(0)
        factors = rng.standard_normal(15 * modes)
        ref = subject_positions(template, fields, normals, factors, 1.0)
        for k in (0, 7, 14):
            cut = factors.copy()
            cut[k * modes:(k + 1) * modes] = 0.0
            moved = subject_positions(template, fields, normals, cut, 1.0)
            diff = np.linalg.norm(ref - moved, axis=1)
            # support of every mode of region k stays inside its blend window
            assert diff[base[k] == 0.0].max() == 0.0
            assert diff.max() > 0.0

    def test_modes_linearly_independent(self):
        # needs region masks beyond a handful of vertices to be meaningful
        big = build_template(subdivisions=3)
        spec = default_factor_spec()
        fields = region_mode_fields(big, spec.blend_mm, spec.modes_per_region)
        for k in range(15):
            block = fields[k * spec.modes_per_region:(k + 1) * spec.modes_per_region]
            rank = np.linalg.matrix_rank(block)
            assert rank == spec.modes_per_region

    def test_class_difference_concentrates_in_amplitude_region(self, tmp_path, template):
        # 8 mm orbit amplitude against zero: displacement between the class
        # mean shapes lands in the orbit mask, >5x any other region
        amps = {"Healthy": np.zeros(15), "Apert": np.zeros(15)}
        amps["Apert"][template.topology.attribute_names.index("orbits")] = 8.0
        spec = SyntheticFactorSpec(class_amplitudes=amps, subject_noise=0.2,
                                   scale_base=1.0, scale_gain=0.0)
        c = generate_synthetic_cohort(spec, {"Healthy": 12, "Apert": 12},
                                      tmp_path, seed=3, template=template)
        means = {}
        for label in ("Healthy", "Apert"):
            stack = [load_mesh(tmp_path / r.mesh_path, template.topology).positions
                     for r in c.records if r.class_label == label]
            means[label] = CorrespondedMesh(template.topology,
                                            np.mean(stack, axis=0))
        field = displacement(means["Healthy"], means["Apert"])
        per_region = [region_mean_displacement(field, m)
                      for m in template.topology.attribute_masks]
        k = template.topology.attribute_names.index("orbits")
        others = [v for j, v in enumerate(per_region) if j != k]
        assert per_region[k] > 5.0 * max(others)
