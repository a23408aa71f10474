"""Resilient output formation tracking for heterogeneous linear multi-agent systems.

Modules: ``graphmodel`` (digraphs and scaling certificates), ``plantmodel``
(agent/leader models and regulator equations), ``switching`` (switching
signals), ``threat`` (sensor attacks), ``synthesis`` (gain design),
``protocol`` (update laws), ``simkernel`` (closed-loop integration),
``config``/``presets``/``cli`` (experiments).
"""

__version__ = "0.1.0"
