import numpy as np
import pytest

from fracscale.geometry import Box, disc_to_polygon, polygon_area
from fracscale.upscale import (
    FractureContribution,
    UpscaleError,
    cell_fracture_data,
    cell_permeability_tensor,
    spectral_radius,
    transformation_tensor,
    upscale_cell,
    upscale_mesh,
)

from conftest import cube_mesh, make_disc, make_network


def contribution(porosity, aperture, normal):
    return FractureContribution(
        area=1.0, aperture=aperture, volume=porosity, porosity=porosity,
        normal=np.asarray(normal, dtype=float),
    )


class TestTransformationTensor:
    def test_axis_aligned_normals(self):
        assert np.allclose(transformation_tensor((0, 0, 1)), np.diag([1.0, 1.0, 0.0]))
        assert np.allclose(transformation_tensor((1, 0, 0)), np.diag([0.0, 1.0, 1.0]))

    def test_diagonal_normal(self):
        s = 1.0 / np.sqrt(2.0)
        expected = np.array([[0.5, -0.5, 0.0], [-0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
        assert np.allclose(transformation_tensor((s, s, 0.0)), expected)

    def test_eigenvalues_are_one_one_zero(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            eig = np.sort(np.linalg.eigvalsh(transformation_tensor(n)))
            assert np.allclose(eig, [0.0, 1.0, 1.0], atol=1e-12)

    def test_rejects_non_unit_normal(self):
        with pytest.raises(ValueError):
            transformation_tensor((0.0, 0.0, 2.0))


class TestCellFractureData:
    def test_volume_and_porosity_arithmetic(self):
        cell = Box(np.zeros(3), np.full(3, 2.5))
        disc = make_disc(0, (1.25, 1.25, 1.2), (0, 0, 1), 0.8, aperture=5e-4)
        data = cell_fracture_data(cell, [disc])
        assert len(data) == 1
        poly_area = polygon_area(disc_to_polygon(disc, 32))
        assert data[0].area == pytest.approx(poly_area, rel=1e-12)
        assert data[0].volume == pytest.approx(poly_area * 5e-4, rel=1e-12)
        assert data[0].porosity == pytest.approx(poly_area * 5e-4 / 15.625, rel=1e-12)

    def test_no_fractures_gives_empty_list(self):
        assert cell_fracture_data(Box.cube(2.5), []) == []

    def test_disc_spanning_two_cells_conserves_area(self):
        disc = make_disc(0, (0.0, 1.0, 1.2), (0, 0, 1), 0.8)
        left = Box(np.array([-2.5, 0.0, 0.0]), np.array([0.0, 2.5, 2.5]))
        right = Box(np.array([0.0, 0.0, 0.0]), np.array([2.5, 2.5, 2.5]))
        total = sum(d.area for cell in (left, right) for d in cell_fracture_data(cell, [disc]))
        assert total == pytest.approx(polygon_area(disc_to_polygon(disc, 32)), rel=1e-9)

    def test_zero_area_clip_dropped_with_diagnostic(self, caplog):
        cell = Box(np.zeros(3), np.full(3, 2.5))
        outside = make_disc(0, (10.0, 10.0, 10.0), (0, 0, 1), 0.5)
        with caplog.at_level("WARNING"):
            data = cell_fracture_data(cell, [outside])
        assert data == []
        assert "dropped" in caplog.text


class TestPermeabilityTensor:
    def test_single_fracture_reference_values(self):
        data = [contribution(3.2e-5, 5e-4, (0, 0, 1))]
        K = cell_permeability_tensor(data)
        expected = 3.2e-5 * (5e-4) ** 2 / 12.0
        assert K[0, 0] == pytest.approx(expected, rel=1e-12)
        assert K[1, 1] == pytest.approx(expected, rel=1e-12)
        assert K[2, 2] == 0.0
        assert expected == pytest.approx(6.667e-13, rel=1e-3)

    def test_no_fractures_zero_tensor(self):
        assert not cell_permeability_tensor([]).any()

    def test_coincident_fractures_add_linearly(self):
        one = cell_permeability_tensor([contribution(1e-5, 4e-4, (0, 1, 0))])
        two = cell_permeability_tensor([contribution(1e-5, 4e-4, (0, 1, 0))] * 2)
        assert np.allclose(two, 2.0 * one, rtol=1e-14)

    def test_aperture_cubed_scaling(self):
        # porosity tracks aperture, so doubling b multiplies the tensor by 8
        base = cell_permeability_tensor([contribution(1e-5, 4e-4, (1, 0, 0))])
        doubled = cell_permeability_tensor([contribution(2e-5, 8e-4, (1, 0, 0))])
        assert np.allclose(doubled, 8.0 * base, rtol=1e-14)


class TestSpectralRadius:
    def test_diagonal_tensor(self):
        assert spectral_radius(np.diag([1.0, 2.0, 3.0])) == pytest.approx(3.0)

    def test_zero_tensor(self):
        assert spectral_radius(np.zeros((3, 3))) == 0.0

    def test_rank_deficient_projector_spectrum(self):
        data = [contribution(3.2e-5, 5e-4, (0, 0, 1))]
        k_f = spectral_radius(cell_permeability_tensor(data))
        assert k_f == pytest.approx(3.2e-5 * (5e-4) ** 2 / 12.0, rel=1e-12)

    def test_homogeneous_scaling(self):
        K = cell_permeability_tensor([contribution(2e-5, 3e-4, (1, 1, 1) / np.sqrt(3))])
        assert spectral_radius(0.0 * K) == 0.0
        for c in (0.5, 7.0):
            assert spectral_radius(c * K) == pytest.approx(c * spectral_radius(K), rel=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(6)
        K = cell_permeability_tensor([
            contribution(2e-5, 3e-4, (0, 0, 1)),
            contribution(1e-5, 2e-4, (1, 0, 0)),
        ])
        for _ in range(20):
            q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            assert spectral_radius(q @ K @ q.T) == pytest.approx(spectral_radius(K), rel=1e-10)

    def test_asymmetric_tensor_rejected(self):
        bad = np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(ValueError):
            spectral_radius(bad)


class TestUpscaleCell:
    def test_matrix_cell_gets_background_values(self):
        props = upscale_cell([], 1e-16, 0.01, 15.625)
        assert props.permeability == 1e-16
        assert props.porosity == 0.01
        assert not props.is_fracture

    def test_single_fracture_reference_permeability(self):
        data = [contribution(3.2e-5, 5e-4, (0, 0, 1))]
        props = upscale_cell(data, 1e-16, 0.01, 1.0)
        expected = (1.0 - 3.2e-5) * 1e-16 + 3.2e-5 * (5e-4) ** 2 / 12.0
        assert props.permeability == pytest.approx(expected, rel=1e-12)
        assert props.permeability == pytest.approx(6.668e-13, rel=1e-3)
        assert props.is_fracture

    def test_porosity_blend_and_strict_mode(self):
        data = [contribution(3.2e-5, 5e-4, (0, 0, 1))]
        blended = upscale_cell(data, 1e-16, 0.01, 1.0)
        phi_f = 3.2e-5
        assert blended.porosity == pytest.approx(phi_f + (1 - phi_f) * 0.01, rel=1e-12)
        strict = upscale_cell(data, 1e-16, 0.01, 1.0, strict_fracture_porosity=True)
        assert strict.porosity == pytest.approx(phi_f, rel=1e-12)
        assert blended.fracture_porosity == strict.fracture_porosity == phi_f

    def test_overfull_cell_rejected(self):
        data = [contribution(1.5, 5e-4, (0, 0, 1))]
        with pytest.raises(UpscaleError):
            upscale_cell(data, 1e-16, 0.01, 1.0)

    def test_invalid_background_rejected(self):
        with pytest.raises(ValueError):
            upscale_cell([], 0.0, 0.01, 1.0)
        with pytest.raises(ValueError):
            upscale_cell([], 1e-16, 1.5, 1.0)


class TestUpscaleMesh:
    def test_empty_network_uniform_field(self):
        mesh = cube_mesh(10.0, 2.5)
        net = make_network([], 10.0)
        props = upscale_mesh(mesh, net, 1e-16, 0.01)
        assert np.all(props.permeability == 1e-16)
        assert np.all(props.porosity == 0.01)
        assert not props.is_fracture.any()

    def test_fracture_volume_conserved_across_refinement(self):
        net = make_network([make_disc(0, (0.0, 0.0, 0.3), (0, 0, 1), 20.0)], 10.0)
        volumes = []
        for orl in (1, 2, 3):
            mesh = cube_mesh(10.0, 2.5, net, orl=orl)
            props = upscale_mesh(mesh, net, 1e-16, 0.01)
            volumes.append(float((props.fracture_porosity * mesh.volume).sum()))
        exact = 10.0 * 10.0 * net.fractures[0].aperture
        for v in volumes:
            assert v == pytest.approx(exact, rel=1e-6)

    def test_permeability_never_below_matrix(self):
        from fracscale.network import GenerationParams, generate_network

        net = generate_network(GenerationParams(L=20.0, n_fractures=30, seed=12))
        mesh = cube_mesh(20.0, 5.0, net, orl=1)
        props = upscale_mesh(mesh, net, 1e-16, 0.01)
        assert np.all(props.permeability >= 1e-16 * (1.0 - 1e-12))
        frac = props.is_fracture
        assert np.all(props.permeability[frac] > 1e-16)
        assert np.all(props.permeability[~frac] == 1e-16)

    def test_summary_and_cell_accessors(self):
        net = make_network([make_disc(0, (0.0, 0.0, 0.3), (0, 0, 1), 2.0)], 10.0)
        mesh = cube_mesh(10.0, 2.5, net, orl=1)
        props = upscale_mesh(mesh, net, 1e-16, 0.01)
        stats = props.summary()
        assert stats["n_cells"] == mesh.num_cells
        assert stats["n_fracture_cells"] == int(mesh.is_fracture.sum())
        idx = int(np.nonzero(props.is_fracture)[0][0])
        cell = props.cell(idx)
        assert cell.is_fracture
        assert cell.permeability == props.permeability[idx]
