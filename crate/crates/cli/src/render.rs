//! Search overlays as binary pixmaps.

use gal_core::{ProblemInstance, SearchTrace};

pub const OBSTACLE: [u8; 3] = [0, 0, 0];
pub const FREE: [u8; 3] = [255, 255, 255];
pub const CLOSED: [u8; 3] = [173, 216, 230];
pub const PATH: [u8; 3] = [220, 20, 20];
pub const START: [u8; 3] = [0, 170, 0];
pub const GOAL: [u8; 3] = [0, 0, 139];

/// Color of every cell, row-major. Later layers win: closed, path, endpoints.
pub fn cell_colors(instance: &ProblemInstance, trace: &SearchTrace) -> Vec<[u8; 3]> {
    let map = &instance.map;
    let mut colors: Vec<[u8; 3]> = map
        .cells()
        .iter()
        .map(|&f| if f { FREE } else { OBSTACLE })
        .collect();
    for (i, c) in colors.iter_mut().enumerate() {
        if trace.closed[i] {
            *c = CLOSED;
        }
        if trace.path[i] {
            *c = PATH;
        }
    }
    colors[map.index(instance.start)] = START;
    colors[map.index(instance.goal)] = GOAL;
    colors
}

/// P6 image with every cell drawn as a `scale x scale` square.
pub fn overlay_ppm(instance: &ProblemInstance, trace: &SearchTrace, scale: usize) -> Vec<u8> {
    let scale = scale.max(1);
    let (w, h) = (instance.map.width(), instance.map.height());
    let colors = cell_colors(instance, trace);
    let mut out = format!("P6\n{} {}\n255\n", w * scale, h * scale).into_bytes();
    for r in 0..h {
        for _ in 0..scale {
            for c in 0..w {
                for _ in 0..scale {
                    out.extend_from_slice(&colors[r * w + c]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use gal_core::{plan, GridMap, Node, SearchPolicy};

    #[test]
    fn overlay_layers_and_size() {
        let map = GridMap::from_ascii(
            "....
             .#..
             ....
             ....",
        )
        .unwrap();
        let inst = ProblemInstance::solve(map, Node::new(0, 0), Node::new(3, 3)).unwrap();
        let trace = plan(&inst, &SearchPolicy::vanilla(), None).unwrap();
        let colors = cell_colors(&inst, &trace);
        assert_eq!(colors[0], START);
        assert_eq!(colors[15], GOAL);
        assert_eq!(colors[5], OBSTACLE);
        let img = overlay_ppm(&inst, &trace, 3);
        let header = b"P6\n12 12\n255\n";
        assert!(img.starts_with(header));
        assert_eq!(img.len(), header.len() + 12 * 12 * 3);
    }
}
