"""Event-triggered control with a dynamic triggering condition.

Modules
-------
certificate
    Lyapunov certificate constants and admissibility of the weight ``lam``.
bounds
    Analytic minimum inter-event time, ``tau_hat`` and the enlargement design.
trigger
    Triggering condition, auxiliary dynamics, resets and presets.
sim
    Hybrid simulator with a compiled kernel and a pure-Python fallback.
plants
    Plant interface, the Lur'e benchmark and disturbance realisations.
cli
    Configuration files, experiments and the ``etc-lab`` command.
"""

__version__ = "0.1.0"
