//! From prism and beam to the lattice at the atoms.

use approx::assert_relative_eq;

use prism_lattice::optics::*;
use prism_lattice::projection::*;

fn demo() -> (PrismSpec, BeamSpec) {
    (
        PrismSpec::from_degrees(3, 3.0, 1.46).unwrap(),
        BeamSpec::new(532e-9, 1.8e-3, 10.0).unwrap(),
    )
}

#[test]
fn thin_prism_deflection_and_overlap() {
    let (p, b) = demo();
    let g = beam_wavevectors(&p, &b).unwrap();
    assert!((g.deflection_angle.to_degrees() - 1.38).abs() <= 1e-12);
    assert_relative_eq!(
        g.overlap_distance,
        1.8e-3 / 1.38f64.to_radians().tan(),
        max_relative = 1e-12
    );
    for k in &g.wavevectors {
        assert_relative_eq!(k.norm(), 2.0 * std::f64::consts::PI / 532e-9, max_relative = 1e-12);
    }
}

#[test]
fn lattice_constant_through_the_telescope() {
    let (p, b) = demo();
    let g = beam_wavevectors(&p, &b).unwrap();
    let a = predicted_lattice_constant(&g).unwrap();
    assert_relative_eq!(
        a,
        2.0 * 532e-9 / (3.0 * 1.38f64.to_radians().sin()),
        max_relative = 1e-12
    );
    let d = demagnification(&TelescopeSpec::default()).unwrap();
    let at_atoms = project_constant(a, d, ProjectionDirection::Demagnify).unwrap();
    assert_relative_eq!(at_atoms, a * 4.0 / 75.0, max_relative = 1e-12);

    let depth = chain_depth(&b, 3, d, &SpeciesSpec::lithium6(), at_atoms).unwrap();
    // 532 nm is blue of the 671 nm line
    assert_eq!(depth.peak_to_valley.character, PotentialCharacter::Repulsive);
    assert_relative_eq!(
        depth.peak_intensity,
        3.0 * depth.envelope_intensity,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        depth.peak_to_valley.depth_photon_recoil / depth.envelope_referenced.depth_photon_recoil,
        3.0,
        max_relative = 1e-12
    );
}

#[test]
fn no_depth_on_resonance() {
    let li = SpeciesSpec::lithium6();
    let b = BeamSpec::new(li.transition_wavelength, 1.8e-3, 1.0).unwrap();
    assert!(chain_depth(&b, 3, 18.75, &li, 1e-6).is_err());
}
