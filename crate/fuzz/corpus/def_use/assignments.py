import numpy as np
from sklearn.linear_model import LinearRegression as LR
x, y = load('train.csv')
x += 1
def score(model, data=default):
    return model.fit(data) + x
for i, row in enumerate(rows):
    total = total + row
with open(path) as fh:
    text = fh
msg = f"ignored {placeholder}"
print(total)
