use super::DataError;

/// One rotation of the leave-one-out protocol: train on every scene except
/// the held-out test scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeaveOneOutSplit {
    pub test_scene: String,
    pub train_scenes: Vec<String>,
}

/// One split per scene, each scene held out exactly once, in input order.
pub fn leave_one_out_splits(scenes: &[String]) -> Result<Vec<LeaveOneOutSplit>, DataError> {
    if scenes.len() < 2 {
        return Err(DataError::Config(format!(
            "leave-one-out needs at least 2 scenes, got {}",
            scenes.len()
        )));
    }
    Ok(scenes
        .iter()
        .enumerate()
        .map(|(i, test)| LeaveOneOutSplit {
            test_scene: test.clone(),
            train_scenes: scenes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, s)| s.clone())
                .collect(),
        })
        .collect())
}
