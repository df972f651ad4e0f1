"""
Parameter budgets of the model zoo
==================================

Counts for every architecture at the default grayscale 64x64 input, and
the two linear-baseline anchors at larger inputs.
"""

from kandefect.models import MODEL_NAMES, ModelSpec, build_model, param_count

for name in MODEL_NAMES:
    model = build_model(ModelSpec(name, (1, 64, 64), 6))
    print(f"{name:28s} {param_count(model):>9d}   {' '.join(model.kinds)}")

###############################################################################
# The linear baseline on 3x200x200 colour images and on a four-class
# 3x120x120 set.

print(param_count(build_model(ModelSpec("SingleLayerLinearNet", (3, 200, 200), 6))))
print(param_count(build_model(ModelSpec("SingleLayerLinearNet", (3, 120, 120), 4))))

###############################################################################
# A KAN head spends ``G + k + 2`` numbers per edge (spline coefficients,
# a scaler and a base weight) but needs far fewer edges than a wide
# fully connected layer.

for name in ("FourLayerConvNet", "FourLayerConvKAN", "TwoLayerConvNetPlus", "TwoLayerConvKAN"):
    print(name, param_count(build_model(ModelSpec(name))))
