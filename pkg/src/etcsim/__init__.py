"""Input-delay event-triggered control: gain algebra, triggering law,
interconnection gains, backstepping synthesis and a fixed-step simulator."""

__version__ = "0.1.0"
