"""
dexterlab - curriculum PPO for a simulated muscle-driven pointing arm.

A planar arm with eleven muscle channels learns to press buttons on a touch
screen. Training combines action masking, a four-stage curriculum, a
dynamically weighted reward and adaptive target sampling.
"""

__version__ = "0.1.0"
