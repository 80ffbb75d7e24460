"""Staggered-grid evolution solvers for piezo-electromagnetic coupling.

The package is organized along the pipeline: weighted time calculus
(:mod:`pemlab.timeweight`), mimetic spatial operators
(:mod:`pemlab.spatialops`), discrete boundary data spaces
(:mod:`pemlab.bdspace`), material laws and positivity certificates
(:mod:`pemlab.material`), the implicit space-time solver
(:mod:`pemlab.evosolve`), the concrete coupled systems
(:mod:`pemlab.piezo`), and a scenario-driven command line
(:mod:`pemlab.cli`).
"""

__version__ = "0.1.0"
