#![allow(dead_code)]

/// Two scalar-input agents with an uncontrollable unstable mode.
pub const UNSTABILIZABLE: &str = r#"
name = "unstabilizable"
agents = 2

[plant]
a = [[1.0, 0.0], [0.0, -1.0]]
b = [[0.0], [1.0]]

[performance]
q = [[1.0, 0.0], [0.0, 1.0]]
gamma = 1.0

[topology]
dwell = 0.5
interval = 0.5
seed = 3
graphs = [{ name = "pair", edges = [[1, 2]] }]

[initial]
states = [[1.0, 0.0], [0.0, 1.0]]

[integrator]
step = 1e-2
horizon = 1.0
"#;

/// Three double integrators, short horizon.
pub const SMALL: &str = r#"
name = "small"
agents = 3

[plant]
a = [[0.0, 1.0], [0.0, 0.0]]
b = [[0.0], [1.0]]

[performance]
q = [[1.0, 0.0], [0.0, 1.0]]
gamma = 2.0

[topology]
dwell = 0.25
interval = 0.25
seed = 7
graphs = [
  { name = "path", edges = [[1, 2], [2, 3]] },
  { name = "triangle", edges = [[1, 2], [2, 3], [1, 3]] },
]

[initial]
states = [[1.0, 0.0], [-2.0, 0.5], [0.5, -1.0]]

[integrator]
step = 1e-2
horizon = 2.0
"#;
