# Survival Augmentation Source Package
