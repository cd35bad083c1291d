//! Named configurations for the standard runs, sized for a workstation.

pub const PRESETS: &[(&str, &str)] = &[
    ("fig3a", include_str!("../../presets/fig3a.conf")),
    ("fig3c", include_str!("../../presets/fig3c.conf")),
    ("fig4a", include_str!("../../presets/fig4a.conf")),
    ("fig4c", include_str!("../../presets/fig4c.conf")),
    ("fig6", include_str!("../../presets/fig6.conf")),
    ("figs1", include_str!("../../presets/figs1.conf")),
    ("figs2", include_str!("../../presets/figs2.conf")),
    ("figs3", include_str!("../../presets/figs3.conf")),
    ("figs4", include_str!("../../presets/figs4.conf")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, text)| *text)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}
