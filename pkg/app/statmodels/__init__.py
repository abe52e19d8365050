# Statmodels package
