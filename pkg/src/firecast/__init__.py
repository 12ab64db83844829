"""firecast: probabilistic wildfire spread prediction at desk scale.

A self-contained toolkit: a travel-time fire simulator generates arrival-time
ground truth, an adversarially trained conditional generator learns one-step
spread transitions, and ensemble rollouts produce probabilistic forecasts.
"""

__version__ = "0.1.0"
