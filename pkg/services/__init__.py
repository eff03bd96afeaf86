# Experiment entry points
