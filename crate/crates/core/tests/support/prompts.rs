//! Records without directives, paired with the runtime facts a probe could
//! have reported for them.

use dschecker_core::domain::{DataDetail, DataInfo, FrameColumn, FrameDetail, ProbeTarget, SnippetRecord};

fn frame(var: &str, line: usize, cols: &[(&str, &str, u64)], rows: u64, sample: &[&str]) -> DataInfo {
    DataInfo {
        target: ProbeTarget::new(var, line),
        type_name: "DataFrame".into(),
        detail: DataDetail::Frame(FrameDetail {
            columns: cols
                .iter()
                .map(|(n, d, k)| FrameColumn {
                    name: n.to_string(),
                    dtype: d.to_string(),
                    non_null: *k,
                })
                .collect(),
            row_count: rows,
            sample_rows: sample.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

fn array(var: &str, line: usize, shape: &[u64], dtype: &str) -> DataInfo {
    DataInfo {
        target: ProbeTarget::new(var, line),
        type_name: "ndarray".into(),
        detail: DataDetail::Ndarray {
            shape: shape.to_vec(),
            dtype: dtype.into(),
        },
    }
}

fn seq(var: &str, line: usize, length: u64) -> DataInfo {
    DataInfo {
        target: ProbeTarget::new(var, line),
        type_name: "list".into(),
        detail: DataDetail::Sequence { length },
    }
}

fn other(var: &str, line: usize, type_name: &str) -> DataInfo {
    DataInfo {
        target: ProbeTarget::new(var, line),
        type_name: type_name.into(),
        detail: DataDetail::Other,
    }
}

fn record(id: &str, library: &str, api: &str, source: &str, infos: Vec<DataInfo>) -> (SnippetRecord, Vec<DataInfo>) {
    let mut r = SnippetRecord::ad_hoc(id, library, source.to_string());
    r.target_api = api.into();
    r.probe_targets = infos.iter().map(|i| i.target.clone()).collect();
    r.data_dependent = !infos.is_empty();
    (r, infos)
}

pub fn without_directives() -> Vec<(SnippetRecord, Vec<DataInfo>)> {
    vec![
        record(
            "imputer",
            "scikit-learn",
            "sklearn.impute.SimpleImputer",
            "import pandas as pd\nfrom sklearn.impute import SimpleImputer\ndf = pd.read_csv('d.csv')\nout = SimpleImputer().fit_transform(df)\nprint(out[:, 1])\n",
            vec![frame("df", 3, &[("A", "float64", 3), ("B", "float64", 0)], 4, &["0 1.0 NaN", "1 2.0 NaN", "2 3.0 NaN"])],
        ),
        record(
            "scaler",
            "scikit-learn",
            "sklearn.preprocessing.StandardScaler",
            "import numpy as np\nfrom sklearn.preprocessing import StandardScaler\nx = np.arange(10)\nStandardScaler().fit(x)\n",
            vec![array("x", 3, &[10], "int64")],
        ),
        record(
            "drop",
            "pandas",
            "pandas.DataFrame.drop",
            "import pandas as pd\ndf = pd.DataFrame({'a': [1], 'b': [2]})\ndf.drop('a')\n",
            vec![frame("df", 2, &[("a", "int64", 1), ("b", "int64", 1)], 1, &["0 1 2"])],
        ),
        record(
            "plot",
            "matplotlib",
            "matplotlib.pyplot.plot",
            "import matplotlib.pyplot as plt\nxs = [1, 2, 3]\nys = [1, 4]\nplt.plot(xs, ys)\n",
            vec![seq("xs", 2, 3), seq("ys", 3, 2)],
        ),
        record(
            "reshape",
            "numpy",
            "numpy.reshape",
            "import numpy as np\na = np.zeros((3, 4))\nb = np.reshape(a, (5, 2))\n",
            vec![array("a", 2, &[3, 4], "float64")],
        ),
        record(
            "palette",
            "seaborn",
            "seaborn.set_palette",
            "import seaborn as sns\nsns.set_palette('husl', -1)\n",
            vec![],
        ),
        record(
            "scalar",
            "numpy",
            "numpy.reshape",
            "import numpy as np\nk = 3\nnp.reshape(np.arange(6), k)\n",
            vec![other("k", 2, "int")],
        ),
        record(
            "empty_frame",
            "pandas",
            "pandas.DataFrame.plot",
            "import pandas as pd\ndf = pd.DataFrame()\ndf.plot()\n",
            vec![frame("df", 2, &[], 0, &[])],
        ),
        record(
            "matrix",
            "scikit-learn",
            "sklearn.impute.SimpleImputer",
            "import numpy as np\nfrom sklearn.impute import SimpleImputer\nm = np.full((2, 3), np.nan)\nSimpleImputer().fit_transform(m)\n",
            vec![array("m", 3, &[2, 3], "float64")],
        ),
        record(
            "two_frames",
            "pandas",
            "pandas.DataFrame.drop",
            "import pandas as pd\nleft = pd.DataFrame({'k': [1, 2]})\nright = left.drop(columns=['k'])\nprint(right.shape)\n",
            vec![
                frame("left", 2, &[("k", "int64", 2)], 2, &["0 1", "1 2"]),
                frame("right", 3, &[], 2, &["0", "1"]),
            ],
        ),
        record(
            "lines",
            "matplotlib",
            "matplotlib.pyplot.plot",
            "import matplotlib.pyplot as plt\nplt.plot([1, 2], 'r--', color='b')\n",
            vec![],
        ),
        record(
            "unicode",
            "seaborn",
            "seaborn.set_palette",
            "import seaborn as sns\n# température\nnames = ['é', 'ü']\nsns.set_palette(names)\n",
            vec![seq("names", 3, 2)],
        ),
    ]
}
