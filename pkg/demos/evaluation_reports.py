"""
Evaluation reports from confusion matrices
==========================================

Accumulate true/predicted pairs into a confusion matrix, compute per-class
precision/recall/F1 and overall accuracy, and render the classification
report. The two matrices below are the two-class validation results of the
first labelling round (200 validation images per class).
"""

from roadwatch import ConfusionMatrix, TWO_CLASS, RoadCondition, merge, render_report

DRY, NON_DRY = RoadCondition.DRY, RoadCondition.NON_DRY

# Residual-network run: strong dry recall, weak non-dry recall.
resnet = ConfusionMatrix.from_table(
    TWO_CLASS,
    {
        DRY: {DRY: 193, NON_DRY: 7},
        NON_DRY: {DRY: 125, NON_DRY: 75},
    },
)

# VGG run: the more balanced of the two.
vgg = ConfusionMatrix.from_table(
    TWO_CLASS,
    {
        DRY: {DRY: 176, NON_DRY: 24},
        NON_DRY: {DRY: 47, NON_DRY: 153},
    },
)

for name, matrix in [("residual network", resnet), ("VGG", vgg)]:
    print(f"--- {name} ---")
    print(render_report(matrix).to_text())

# Matrices accumulated on separate shards combine associatively.
combined = merge(resnet, vgg)
print(f"combined accuracy over {combined.total} samples:")
print(f"  {render_report(combined).accuracy_percent}%")
