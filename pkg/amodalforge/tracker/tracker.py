import pickle

import numpy as np
from matplotlib import pyplot as plt


class GenerationTracker:
    """
    This class records how a generation run went, scene by scene.

    It records the number of scene specifications rendered for every scene index (stored as tracker.attempts), including the attempts rejected for having a fully hidden instance.

    It records the time taken to produce each scene, whether or not it was accepted.

    It records the indices of the scenes that were skipped because every attempt was rejected.

    update() is called by generate_batch() once per scene index, in index order. report() prints a summary and plot() shows histograms of attempts and times.
    """

    def __init__(self):
        # Per-scene records, in scene index order
        self.sceneIds = []  # Scene index of each record
        self.attempts = []  # Number of specs rendered for the scene
        self.times = []  # Wall time in seconds spent on the scene
        self.accepted = []  # True if the scene was emitted

        # Counters
        self.rejectionCount = 0  # Rejected specs over the whole run
        self.skipped = []  # Indices of scenes skipped after exhausting their retries

    def update(self, sceneId, attempts, accepted=True, elapsed=np.nan):
        """
        Record the outcome of one scene index.

        Parameters
        ----------
        sceneId : int
            Index of the scene in the batch.
        attempts : int
            Number of scene specifications rendered. An accepted scene rejected attempts - 1 specs, a skipped scene rejected all of them.
        accepted : bool, optional
            Whether the scene was emitted. The default is True.
        elapsed : float, optional
            Time in seconds spent on the scene.

        Returns
        -------
        None.
        """
        self.sceneIds.append(int(sceneId))
        self.attempts.append(int(attempts))
        self.times.append(float(elapsed))
        self.accepted.append(bool(accepted))
        self.rejectionCount += attempts - 1 if accepted else attempts
        if not accepted:
            self.skipped.append(int(sceneId))

    @property
    def sceneCount(self):
        return len(self.sceneIds)

    def acceptedCount(self):
        return int(np.sum(self.accepted))

    def mean_attempts(self):
        """
        Mean number of attempts per scene index, np.nan before any update.
        """
        return float(np.mean(self.attempts)) if self.attempts else np.nan

    def total_time(self):
        """
        Total time spent generating scenes, in seconds. Scenes rendered in parallel are summed, so this can exceed the wall time of the run.
        """
        return float(np.nansum(self.times))

    def report(self):
        """
        Print a summary of the run.

        Returns
        -------
        None.
        """
        print(f'Scenes attempted:       {self.sceneCount}')
        print(f'Scenes accepted:        {self.acceptedCount()}')
        print(f'Scenes skipped:         {len(self.skipped)}' + (f' ({", ".join(str(s) for s in self.skipped[:10])}{", ..." if len(self.skipped) > 10 else ""})' if self.skipped else ''))
        print(f'Rejected specs:         {self.rejectionCount}')
        print(f'Mean attempts/scene:    {self.mean_attempts():.3f}')
        print(f'Generation time (sec):  {self.total_time():.2f}')

    def plot(self):
        """
        This method plots histograms of the number of attempts per scene and of the time per scene.

        Returns
        -------
        None.
        """

        def plot_hist(values, xlabel, title, discrete=False):
            """
            Histogram with a vertical line at the mean.
            Parameters
            ----------
            values : list
                Values to plot.
            xlabel : string
                Label of the x axis.
            title : string
                Title of the plot.
            discrete : bool, optional
                Use one bin per integer value.
            """
            values = np.asarray(values, dtype=float)
            values = values[np.isfinite(values)]
            if len(values) > 0:
                plt.figure()
                bins = np.arange(values.min(), values.max() + 2) - 0.5 if discrete else 10
                n, _, _ = plt.hist(values, bins=bins)
                plt.vlines(x=np.mean(values), ymin=0, ymax=np.max(n), colors=['k'],
                           label=f'Mean: {np.mean(values):.3f}')
                plt.xlabel(xlabel)
                plt.ylabel('Frequency')
                plt.title(title)
                plt.legend()
                plt.show()

        plot_hist(self.attempts, 'Attempts', 'Histogram of attempts per scene', discrete=True)
        plot_hist(self.times, 'Time (sec)', 'Histogram of generation times')

    def save(self, filename):
        """
        Saves the tracked variables, so a run can be reviewed later.

        Parameters
        ----------
        filename : string
            Filename for storing the tracked variables. Variables are pickled.

        Returns
        -------
        None.
        """
        data = {'sceneIds': self.sceneIds, 'attempts': self.attempts, 'times': self.times, 'accepted': self.accepted,
                'rejectionCount': self.rejectionCount, 'skipped': self.skipped}
        with open(filename, 'wb') as f:
            pickle.dump(data, f)

    def load(self, filename):
        """
        Loads tracked variables written by save().

        Parameters
        ----------
        filename : string
            Filename of the stored tracked variables.

        Returns
        -------
        None.
        """
        with open(filename, 'rb') as f:
            data = pickle.load(f)
        keys = ['sceneIds', 'attempts', 'times', 'accepted', 'rejectionCount', 'skipped']
        self.sceneIds, self.attempts, self.times, self.accepted, self.rejectionCount, self.skipped = [
            data[key] if key in data.keys() else None for key in keys]
