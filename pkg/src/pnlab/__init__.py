"""Numerical lab for weighted pn-spaces and the degenerate parabolic equation u_t - |u|^ρ Δu + b₀|u|^{μ+1} = h."""
