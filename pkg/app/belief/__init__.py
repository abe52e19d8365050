# Belief package
