import numpy as np
import pandas as pd
from sklearn.impute import SimpleImputer
df = pd.read_csv("data.csv")
imputer = SimpleImputer(missing_values=np.nan,
                        strategy="constant", fill_value=1)
imp_array = imputer.fit_transform(df)
print(imp_array[:, 1])
