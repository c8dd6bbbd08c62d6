import json

import pytest

from homlab.experiment_spec import (CheckerboardFamilySpec, ConstantField,
                                    CounterexamplesParams, PerturbedField,
                                    SpecValidationError, build_density,
                                    build_family, build_perforation,
                                    build_scalar_field, field_signature,
                                    parse_spec, serialize_spec,
                                    validate_document)
from homlab.fields import (BallSupport, Perturbed, PowerOfTwoCells, PPower,
                           QuadraticIsotropic, QuadraticMatrix)
from homlab.perforation import SparseRemoval


def doc(tree) -> str:
    return json.dumps(tree)


MINIMAL_CELL = {"kind": "cell", "field": {"type": "constant", "value": 2},
                "resolution": 64}


class TestParsing:
    def test_minimal_cell_fills_defaults(self):
        spec = parse_spec(doc(MINIMAL_CELL))
        assert spec.kind == "cell"
        assert spec.out == "out"
        assert spec.seed == 0
        assert spec.params.field == ConstantField(2.0, 1.0, 4.0, 1)
        assert spec.params.p == 2.0
        assert spec.params.xi == (1.0,)
        assert spec.params.resolutions == (64,)

    def test_counterexamples_needs_no_parameters(self):
        spec = parse_spec(doc({"kind": "counterexamples"}))
        assert spec.params == CounterexamplesParams()

    def test_alpha_above_beta_names_bounds(self):
        tree = dict(MINIMAL_CELL,
                    field={"type": "constant", "value": 2,
                           "alpha": 4.0, "beta": 1.0})
        violations = validate_document(doc(tree))
        assert any(v.path == "field.bounds" for v in violations)

    def test_all_violations_reported_at_once(self):
        tree = {"kind": "cell", "bogus": 1,
                "field": {"type": "constant", "alpha": 4.0, "beta": 1.0},
                "resolution": 64}
        paths = {v.path for v in validate_document(doc(tree))}
        assert {"field.value", "field.bounds", "bogus"} <= paths

    def test_invalid_json_is_one_violation(self):
        violations = validate_document("{not json")
        assert len(violations) == 1
        assert violations[0].path == "$"

    def test_unknown_kind_and_field_type(self):
        assert any(v.path == "kind"
                   for v in validate_document(doc({"kind": "banana"})))
        tree = dict(MINIMAL_CELL, field={"type": "banana"})
        assert any(v.path == "field.type"
                   for v in validate_document(doc(tree)))

    def test_cell_rejects_non_periodic_fields(self):
        tree = dict(MINIMAL_CELL,
                    field={"type": "half_space", "gamma": 2.0, "c": 0.5})
        violations = validate_document(doc(tree))
        assert any(v.path == "field.type" and "periodic" in v.message
                   for v in violations)

    def test_resolution_shorthand_conflicts(self):
        tree = dict(MINIMAL_CELL, resolutions=[64, 128])
        violations = validate_document(doc(tree))
        assert any("not both" in v.message for v in violations)

    def test_trig_term_shape_checked(self):
        tree = dict(MINIMAL_CELL,
                    field={"type": "trig", "offset": 2.0, "dim": 2,
                           "terms": [[0.5, [1.0], 0.0]]})
        violations = validate_document(doc(tree))
        assert any(v.path == "field.terms[0]" for v in violations)

    def test_matrix_must_be_elliptic(self):
        tree = {"kind": "cell", "resolution": 32,
                "field": {"type": "matrix", "entries": [[0.5, 0], [0, 2]]}}
        violations = validate_document(doc(tree))
        assert any(v.path == "field.entries" for v in violations)
        good = {"kind": "cell", "resolution": 32,
                "field": {"type": "matrix", "entries": [[2, 1], [-1, 2]]}}
        assert validate_document(doc(good)) == []

    def test_stability_field_signatures_must_match(self):
        step1 = {"type": "periodic_step", "subdivisions": 2,
                 "values": [1.0, 4.0], "dim": 1}
        step2 = {"type": "periodic_step", "subdivisions": 2,
                 "values": [1.0, 4.0, 1.0, 4.0], "dim": 2}
        tree = {"kind": "stability", "field": step1, "field_g": step2}
        violations = validate_document(doc(tree))
        assert any(v.path == "field_g.dim" for v in violations)
        other_bounds = dict(step1, values=[1.0, 3.5], beta=3.5)
        tree = {"kind": "stability", "field": step1, "field_g": other_bounds}
        violations = validate_document(doc(tree))
        assert any(v.path == "field_g.bounds" for v in violations)

    def test_stability_t_list_follows_p(self):
        step = {"type": "periodic_step", "subdivisions": 2,
                "values": [1.0, 4.0], "dim": 1}
        tree = {"kind": "stability", "field": step, "field_g": step}
        assert parse_spec(doc(tree)).params.t_list == (1.0,)
        assert parse_spec(doc(dict(tree, p=3.0))).params.t_list == (1.0, 2.0)
        spec = parse_spec(doc(tree))
        assert spec.params.window_sizes == spec.params.R_list

    def test_window_grid_must_be_integral(self):
        tree = {"kind": "rve",
                "field": {"type": "half_space", "gamma": 2.0, "c": 0.5},
                "windows": [2.5, 5.0, 7.5], "resolution_per_unit": 3}
        violations = validate_document(doc(tree))
        assert any("must be an integer" in v.message for v in violations)

    def test_stochastic_family_bounds_must_match(self):
        fam = {"type": "checkerboard_family", "values": [1.0, 4.0]}
        other = dict(fam, beta=5.0)
        tree = {"kind": "stochastic", "family": fam, "family_g": other}
        violations = validate_document(doc(tree))
        assert any(v.path == "family_g.bounds" for v in violations)

    def test_perforation_hole_resolution_guard(self):
        tree = {"kind": "perforation", "radius": 0.01, "resolution": 64}
        violations = validate_document(doc(tree))
        assert any(v.path == "resolution" for v in violations)

    def test_parse_spec_raises_with_every_violation(self):
        tree = {"kind": "cell", "bogus": 1,
                "field": {"type": "constant", "alpha": 4.0, "beta": 1.0},
                "resolution": 64}
        with pytest.raises(SpecValidationError) as err:
            parse_spec(doc(tree))
        assert len(err.value.violations) >= 3


ROUND_TRIP_DOCS = [
    MINIMAL_CELL,
    {"kind": "cell", "p": 3.0, "xi": [1.0],
     "field": {"type": "periodic_step", "subdivisions": 2,
               "values": [1.0, 4.0], "dim": 1},
     "resolutions": [64, 128]},
    {"kind": "rve", "out": "artifacts", "seed": 3,
     "field": {"type": "perturbed",
               "base": {"type": "periodic_step", "subdivisions": 2,
                        "values": [1.5, 3.5], "dim": 1},
               "rule": {"type": "ball", "radius": 2.0},
               "amplitude": -0.5},
     "windows": [4, 8, 16]},
    {"kind": "stability",
     "field": {"type": "trig", "offset": 2.0, "dim": 1,
               "terms": [[0.8, [1.0], 0.0]], "beta": 3.5},
     "field_g": {"type": "trig", "offset": 2.0, "dim": 1,
                 "terms": [[0.8, [0.5], 0.25]], "beta": 3.5},
     "label": "trig pair"},
    {"kind": "perforation", "radius": 0.25, "removal": True,
     "eps_list": [0.5, 0.25], "n_list": [4, 64]},
    {"kind": "stochastic", "seed": 11,
     "family": {"type": "checkerboard_family", "values": [1.0, 4.0]},
     "family_g": {"type": "checkerboard_family", "values": [1.0, 4.0],
                  "flip": {"type": "power_of_two", "width": 0.5}}},
    {"kind": "counterexamples"},
]


class TestRoundTrip:
    @pytest.mark.parametrize("tree", ROUND_TRIP_DOCS,
                             ids=[t["kind"] + str(i) for i, t in
                                  enumerate(ROUND_TRIP_DOCS)])
    def test_parse_serialize_parse(self, tree):
        spec = parse_spec(doc(tree))
        text = serialize_spec(spec)
        assert parse_spec(text) == spec

    def test_serialization_is_deterministic(self):
        spec = parse_spec(doc(MINIMAL_CELL))
        assert serialize_spec(spec) == serialize_spec(spec)


class TestBuilders:
    def test_perturbed_density(self):
        spec = parse_spec(doc(ROUND_TRIP_DOCS[2]))
        density = build_density(spec.params.field, spec.params.p)
        assert isinstance(density, QuadraticIsotropic)
        assert isinstance(density.coeff, Perturbed)
        assert density.coeff.rule == BallSupport(2.0)
        assert density.coeff.amplitude == -0.5

    def test_p_power_density(self):
        spec = parse_spec(doc(ROUND_TRIP_DOCS[1]))
        density = build_density(spec.params.field, spec.params.p)
        assert isinstance(density, PPower)
        assert density.p == 3.0

    def test_matrix_density(self):
        tree = {"kind": "cell", "resolution": 32,
                "field": {"type": "matrix", "entries": [[2, 1], [-1, 2]]}}
        spec = parse_spec(doc(tree))
        density = build_density(spec.params.field, 2.0)
        assert isinstance(density, QuadraticMatrix)
        assert not density.matrix.symmetric

    def test_family_with_flip(self):
        spec = parse_spec(doc(ROUND_TRIP_DOCS[5]))
        family = build_family(spec.params.family_g)
        assert family.flip_cells == PowerOfTwoCells(0.5)
        plain = build_family(spec.params.family)
        assert plain.flip_cells is None

    def test_perforation_with_removal(self):
        spec = parse_spec(doc(ROUND_TRIP_DOCS[4]))
        E = build_perforation(spec.params)
        assert isinstance(E.perturbation, SparseRemoval)
        assert E.radius == 0.25

    def test_matrix_descriptor_has_no_scalar_field(self):
        tree = {"kind": "cell", "resolution": 32,
                "field": {"type": "matrix", "entries": [[2, 0], [0, 2]]}}
        spec = parse_spec(doc(tree))
        with pytest.raises(TypeError):
            build_scalar_field(spec.params.field)

    def test_field_signature_follows_perturbation_base(self):
        spec = parse_spec(doc(ROUND_TRIP_DOCS[2]))
        assert isinstance(spec.params.field, PerturbedField)
        assert field_signature(spec.params.field) == (1, 1.0, 4.0)

    def test_family_spec_shape(self):
        spec = parse_spec(doc(ROUND_TRIP_DOCS[5]))
        assert isinstance(spec.params.family, CheckerboardFamilySpec)
        assert spec.params.trials == 16
        assert spec.params.statistic_sizes == (8.0, 16.0, 32.0, 64.0)
