//! Invariant circles of the dissipative spin-orbit time-2π map: model maps,
//! periodic functions, the difference equation, graph transforms,
//! translated curves and normal forms.

pub mod cohomology;
pub mod fourier;
pub mod graph_transform;
pub mod model_maps;
pub mod normal_form;
pub mod russmann;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/maps.md")]
    mod maps {}
    #[doc = include_str!("../../../book/src/fourier.md")]
    mod fourier {}
    #[doc = include_str!("../../../book/src/graph_transform.md")]
    mod graph_transform {}
    #[doc = include_str!("../../../book/src/translated_curves.md")]
    mod translated_curves {}
    #[doc = include_str!("../../../book/src/normal_form.md")]
    mod normal_form {}
}
