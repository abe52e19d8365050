# Distributed Bayes simulation toolkit
