# Estimators package
